use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] alphacap_core::Error),

    #[error("cannot read {}: {source}", path.display())]
    Input { path: PathBuf, source: std::io::Error },

    #[error("cannot parse {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },

    #[error("cannot write {}: {source}", path.display())]
    Output { path: PathBuf, source: std::io::Error },

    /// The command ran but one of its checks failed.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    /// 2 for numerical failures during a run, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        use alphacap_core::Error as E;
        match self {
            CliError::Core(E::NonFinite { .. } | E::UnreachableVolume { .. } | E::RefineQuadrature { .. }) => 2,
            _ => 1,
        }
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is out of range. `key` names the offending parameter.
    #[error("invalid `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("grid mismatch: transform prepared for {expected}, field uses {found}")]
    GridMismatch { expected: String, found: String },

    #[error("target volume exceeds domain (alpha = {alpha}, domain volume = {domain})")]
    TargetExceedsDomain { alpha: f64, domain: f64 },

    #[error("no positive threshold reaches volume {alpha} (largest reachable: {reachable})")]
    UnreachableVolume { alpha: f64, reachable: f64 },

    #[error("non-finite value produced at step {step}")]
    NonFinite { step: usize },

    #[error("direction set does not span R^{dim}")]
    RankDeficient { dim: usize },

    #[error("pair budget exceeded: n = {n} needs {pairs} pairs, cap is {cap}")]
    PairBudget { n: usize, pairs: u64, cap: u64 },

    #[error("quadrature error estimate {estimate:e} exceeds {limit:e}; refine quadrature")]
    RefineQuadrature { estimate: f64, limit: f64 },

    #[error("malformed grid dump at byte {offset}: {reason}")]
    MalformedDump { offset: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

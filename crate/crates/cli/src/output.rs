//! Output files: grid dumps, PGM snapshots and small CSV helpers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use alphacap_core::ScalarField;

use crate::error::{CliError, CliResult};

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|source| CliError::Output {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(OutDir {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes `name` through `body`, attributing I/O failures to the file.
    pub fn write(
        &self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> alphacap_core::Result<()>,
    ) -> CliResult<PathBuf> {
        let path = self.path(name);
        let wrap = |source| CliError::Output {
            path: path.clone(),
            source,
        };
        let mut out = BufWriter::new(File::create(&path).map_err(wrap)?);
        body(&mut out).map_err(|e| match e {
            alphacap_core::Error::Io(source) => wrap(source),
            other => other.into(),
        })?;
        out.flush().map_err(wrap)?;
        Ok(path)
    }

    /// `field_tNNNNN.grid`, plus a matching `.pgm` when `snapshot` is set.
    pub fn dump(&self, field: &ScalarField, snapshot: bool) -> CliResult<()> {
        let stem = format!("field_t{:05}", field.time());
        self.write(&format!("{stem}.grid"), |out| field.write_dump(out))?;
        if snapshot {
            self.write(&format!("{stem}.pgm"), |out| Ok(write_pgm(field, out)?))?;
        }
        Ok(())
    }
}

/// Binary greyscale image of the field, 0 black and 1 white, with the largest
/// `y` in the top row. 1D fields give a single row; 3D fields show the middle
/// `z` slice.
pub fn write_pgm<W: Write>(field: &ScalarField, mut out: W) -> std::io::Result<()> {
    let spec = field.spec();
    let n = spec.cells_per_axis();
    let rows = if spec.dim() == 1 { 1 } else { n };
    let k = if spec.dim() == 3 { n / 2 } else { 0 };
    write!(out, "P5\n{n} {rows}\n255\n")?;
    let mut line = vec![0u8; n];
    for r in 0..rows {
        let j = rows - 1 - r;
        for (i, px) in line.iter_mut().enumerate() {
            let v = field.values()[spec.ravel([i, j, k])];
            *px = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
        out.write_all(&line)?;
    }
    Ok(())
}

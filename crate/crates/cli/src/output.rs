//! CSV output with the provenance line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Directory that receives the CSV files of one run.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
    header: String,
}

/// `# jcas-lab <version> config_hash=<sha256> seed=<u64>`
pub fn provenance_line(config_hash: &str, seed: u64) -> String {
    format!("# jcas-lab {} config_hash={config_hash} seed={seed}", env!("CARGO_PKG_VERSION"))
}

impl OutputDir {
    pub fn create(root: &Path, config_hash: &str, seed: u64) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|source| CliError::Io { path: root.display().to_string(), source })?;
        Ok(Self { root: root.to_path_buf(), header: provenance_line(config_hash, seed) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `body` under `name`, preceded by the provenance line.
    pub fn write(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        let path = self.root.join(name);
        let mut text = String::with_capacity(body.len() + self.header.len() + 1);
        let _ = writeln!(text, "{}", self.header);
        text.push_str(body);
        std::fs::write(&path, text).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
        Ok(path)
    }
}

/// Formats a float for CSV, spelling infinities `inf` / `-inf`.
pub fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

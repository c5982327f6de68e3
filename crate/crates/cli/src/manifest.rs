use std::path::{Path, PathBuf};

use lipbound::fsutil::write_atomic;
use serde::Serialize;

use crate::CliError;

/// Record of one command run, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub artifacts: Vec<PathBuf>,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize, seed: u64) -> Self {
        Self {
            command: command.to_owned(),
            argv: std::env::args().collect(),
            config: serde_json::to_value(config).expect("arguments serialise"),
            seed,
            artifacts: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
        }
    }

    pub fn write(&mut self, path: &Path) -> Result<(), CliError> {
        self.artifacts.push(path.to_path_buf());
        let missing: Vec<_> = self.artifacts[..self.artifacts.len() - 1]
            .iter()
            .filter(|p| !p.is_file())
            .collect();
        if !missing.is_empty() {
            return Err(CliError::internal(format!("artifacts missing after run: {missing:?}")));
        }
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        write_atomic(path, text.as_bytes())?;
        Ok(())
    }
}

/// `dir/name.lbn.json` or `dir/name.ext` → `dir/name<suffix>`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = match name.strip_suffix(".lbn.json") {
        Some(stem) => stem.to_owned(),
        None => Path::new(&name)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or(name.clone()),
    };
    path.with_file_name(format!("{stem}{suffix}"))
}

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use infoplay_train::config::fingerprint_text;
use serde::{Deserialize, Serialize};

use crate::error::OutputError;
use crate::export::write_file;

/// Provenance record written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: String,
    pub fingerprint: String,
    pub tool_version: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<PathBuf>,
}

pub fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

impl RunManifest {
    pub fn start(canonical_config: String) -> Self {
        Self {
            fingerprint: fingerprint_text(&canonical_config),
            config: canonical_config,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
            outputs: Vec::new(),
        }
    }

    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn finish(mut self, path: &Path) -> Result<Self, OutputError> {
        self.finished_unix_ms = now_ms();
        let text = serde_json::to_string_pretty(&self).map_err(|e| OutputError::Io(std::io::Error::other(e)))?;
        write_file(path, format!("{text}\n").as_bytes())?;
        Ok(self)
    }
}

/// `<dir>/manifest.json` for directory outputs, `<file>.manifest.json` otherwise.
pub fn manifest_path_for(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        out.join("manifest.json")
    } else {
        let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        out.with_file_name(name)
    }
}

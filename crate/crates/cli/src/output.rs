use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Output directory of one command. Files are registered as they are
/// produced; `finish` writes `<command>.manifest.json` with the config hash
/// and a SHA-256 per file, which is how formats without a comment syntax
/// (CSV corpora) carry the hash.
pub struct OutputDir {
    root: PathBuf,
    command: &'static str,
    config_hash: String,
    files: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: &'a str,
    files: BTreeMap<&'a str, String>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("cannot write {}: {e}", path.display()))
}

impl OutputDir {
    pub fn create(root: &Path, command: &'static str, config_hash: &str) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            command,
            config_hash: config_hash.to_string(),
            files: Vec::new(),
        })
    }

    /// Path for `rel`, with parent directories created, registered for the
    /// manifest.
    pub fn file(&mut self, rel: &str) -> Result<PathBuf, CliError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        if !self.files.iter().any(|f| f == rel) {
            self.files.push(rel.to_string());
        }
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<PathBuf, CliError> {
        let path = self.file(rel)?;
        let json = serde_json::to_string_pretty(value).map_err(|e| io_err(&path, e))?;
        std::fs::write(&path, json + "\n").map_err(|e| io_err(&path, e))?;
        Ok(path)
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.file(rel)?;
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }

    pub fn finish(self) -> Result<PathBuf, CliError> {
        let mut files = BTreeMap::new();
        for rel in &self.files {
            let path = self.root.join(rel);
            let bytes = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
            files.insert(rel.as_str(), format!("{:x}", Sha256::digest(&bytes)));
        }
        let manifest = Manifest {
            command: self.command,
            config_hash: &self.config_hash,
            files,
        };
        let path = self.root.join(format!("{}.manifest.json", self.command));
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| io_err(&path, e))?;
        std::fs::write(&path, json + "\n").map_err(|e| io_err(&path, e))?;
        Ok(path)
    }
}

pub fn timestamp(enabled: bool) -> Option<String> {
    enabled.then(|| {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or_default();
        secs.to_string()
    })
}

//! Run manifests: resolved configuration plus checksums of every input and
//! output, written as `<subcommand>.manifest.json`.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::{is_stdio, write_atomic};

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub path: String,
    /// Hex SHA-256 of the bytes on disk; absent for stdin.
    pub sha256: Option<String>,
    pub bytes: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub config: serde_json::Value,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub results: serde_json::Map<String, serde_json::Value>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn artifact(path: &Path, bytes: Option<&[u8]>) -> Artifact {
    Artifact {
        path: path.display().to_string(),
        sha256: bytes.map(sha256_hex),
        bytes: bytes.map(|b| b.len() as u64),
    }
}

impl Manifest {
    pub fn new(subcommand: &str, config: serde_json::Value) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_owned(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            results: serde_json::Map::new(),
        }
    }

    /// Record an input file by hashing its raw bytes.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        if is_stdio(path) {
            self.inputs.push(artifact(path, None));
            return Ok(());
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.push(artifact(path, Some(&bytes)));
        Ok(())
    }

    /// Record an output after it has been written.
    pub fn output(&mut self, path: &Path, written: &[u8]) -> Result<()> {
        if is_stdio(path) {
            self.outputs.push(artifact(path, Some(written)));
            return Ok(());
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.outputs.push(artifact(path, Some(&bytes)));
        Ok(())
    }

    pub fn result(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.results.insert(key.to_owned(), value.into());
    }

    pub fn path_in(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.manifest.json", self.subcommand))
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = self.path_in(dir);
        let mut json = serde_json::to_string_pretty(self).expect("manifest serialises");
        json.push('\n');
        write_atomic(&path, json.as_bytes())?;
        Ok(path)
    }
}

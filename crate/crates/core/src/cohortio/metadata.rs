use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{format_error, io_error};
use crate::datagen::SelectionStats;
use crate::error::Result;

/// Sidecar written next to every output file. It carries enough to repeat
/// the run: the effective configuration, its hash, the seed and generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunMetadata {
    pub version: String,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    /// SHA-256 of `config`.
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionSummary>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub inputs: Vec<InputFile>,
    /// Effective configuration as TOML.
    pub config: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSummary {
    pub candidates: u64,
    pub accepted: u64,
    pub acceptance_rate: f64,
}

impl From<SelectionStats> for SelectionSummary {
    fn from(s: SelectionStats) -> Self {
        Self {
            candidates: s.candidates,
            accepted: s.accepted,
            acceptance_rate: s.fraction(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

impl RunMetadata {
    pub fn new(command: &str, config: String) -> Self {
        Self {
            version: crate::VERSION.to_string(),
            command: command.to_string(),
            seed: None,
            generator: None,
            config_hash: sha256_hex(config.as_bytes()),
            selection: None,
            warnings: Vec::new(),
            inputs: Vec::new(),
            config,
        }
    }

    /// Records an input file with its content hash.
    pub fn add_input(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| io_error(path, e))?;
        self.inputs.push(InputFile {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `<output>.meta.toml`
pub fn sidecar_path(output: impl AsRef<Path>) -> PathBuf {
    let mut name = output.as_ref().as_os_str().to_owned();
    name.push(".meta.toml");
    PathBuf::from(name)
}

/// Writes the sidecar of `output` and returns its path.
pub fn write_metadata(output: impl AsRef<Path>, meta: &RunMetadata) -> Result<PathBuf> {
    let path = sidecar_path(output);
    let text = toml::to_string(meta).map_err(|e| format_error(&path, e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| io_error(&path, e))?;
    Ok(path)
}

pub fn read_metadata(path: impl AsRef<Path>) -> Result<RunMetadata> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    toml::from_str(&text).map_err(|e| format_error(path, e.to_string()))
}

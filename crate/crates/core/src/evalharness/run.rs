use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detector::{Checkpoint, DetectorConfig};
use crate::error::{Error, Result};
use crate::util::{sha256_hex, write_atomic};

/// Provenance of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model_id: String,
    pub dataset_name: String,
    pub seed: u64,
    pub config_digest: String,
    pub store: PathBuf,
    pub wall_time_s: f64,
}

impl RunRecord {
    /// Writes `run.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))?;
        json.push('\n');
        write_atomic(&dir.join("run.json"), json.as_bytes())
    }
}

/// Digest identifying a (detector configuration, checkpoint) pair.
pub fn config_digest(config: &DetectorConfig, checkpoint: &Checkpoint) -> Result<String> {
    let json = serde_json::to_string(config).map_err(|e| Error::Schema(e.to_string()))?;
    Ok(sha256_hex(format!("{json}\n{}", checkpoint.digest()).as_bytes()))
}

/// `root/<digest prefix>-s<seed>`.
pub fn run_dir(root: &Path, digest: &str, seed: u64) -> PathBuf {
    root.join(format!("{}-s{seed}", &digest[..digest.len().min(16)]))
}

/// Contents of the reproducibility record dropped into every output directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Repro {
    pub config_digest: String,
    pub seed: u64,
    pub version: String,
}

pub const REPRO_FILE: &str = "repro.json";

pub fn write_repro(dir: &Path, config_digest: &str, seed: u64) -> Result<()> {
    let r = Repro {
        config_digest: config_digest.to_string(),
        seed,
        version: crate::VERSION.to_string(),
    };
    let mut json = serde_json::to_string_pretty(&r).map_err(|e| Error::Schema(e.to_string()))?;
    json.push('\n');
    write_atomic(&dir.join(REPRO_FILE), json.as_bytes())
}

pub fn read_repro(dir: &Path) -> Result<Repro> {
    let path = dir.join(REPRO_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

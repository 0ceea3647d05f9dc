use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use cat_core::kg::Metrics;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub split: String,
    pub path: String,
    pub sha256: String,
    pub triples: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load_s: f64,
    pub train_s: f64,
    pub eval_s: f64,
    pub total_s: f64,
}

/// Everything needed to describe and re-launch a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub build: String,
    pub seed: u64,
    pub variant: String,
    /// flat config keys, sufficient to reproduce the run
    pub config: BTreeMap<String, String>,
    pub datasets: Vec<DatasetEntry>,
    pub num_entities: usize,
    pub num_relations: usize,
    pub num_params: usize,
    pub best_epoch: usize,
    pub checkpoint: String,
    pub metrics: BTreeMap<String, Metrics>,
    pub timings: Timings,
}

pub fn build_id() -> String {
    match option_env!("CAT_BUILD_ID") {
        Some(id) => format!("cat-cli {} ({id})", env!("CARGO_PKG_VERSION")),
        None => format!("cat-cli {}", env!("CARGO_PKG_VERSION")),
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    /// Reads the config snapshot of a manifest so a run can be relaunched
    /// with `--config manifest.json`.
    pub fn config_from_json(text: &str, origin: &Path, base: &Path) -> Result<RunConfig> {
        let m: RunManifest = serde_json::from_str(text).map_err(|e| CliError::Config {
            path: origin.to_path_buf(),
            msg: e.to_string(),
        })?;
        let mut cfg = RunConfig::default();
        for (k, v) in &m.config {
            cfg.set(k, v, base).map_err(|e| CliError::Config {
                path: origin.to_path_buf(),
                msg: e.to_string(),
            })?;
        }
        Ok(cfg)
    }
}

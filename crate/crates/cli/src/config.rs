//! Run configuration: a TOML file whose tables flatten to dotted keys
//! (`train.lr`, `model.dropout.entity`, `data.train`, ...).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use cat_core::trainer::TrainConfig;

use crate::error::{CliError, Result};

/// Dataset file locations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data: DataPaths,
}

pub const DATA_KEYS: [&str; 3] = ["data.train", "data.valid", "data.test"];

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<(String, toml::Value)>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => out.push((prefix.to_string(), other.clone())),
    }
}

impl RunConfig {
    /// Parses TOML text. Relative data paths are resolved against `base`.
    pub fn from_toml_str(text: &str, origin: &Path, base: &Path) -> Result<Self> {
        let cfg_err = |msg: String| CliError::Config {
            path: origin.to_path_buf(),
            msg,
        };
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| cfg_err(e.message().to_string()))?;
        let mut flat = Vec::new();
        flatten("", &toml::Value::Table(table), &mut flat);
        let mut cfg = RunConfig::default();
        for (key, value) in flat {
            let text = match &value {
                toml::Value::String(s) => s.clone(),
                toml::Value::Integer(i) => i.to_string(),
                toml::Value::Float(f) => f.to_string(),
                other => return Err(cfg_err(format!("{key}: unsupported value {other}"))),
            };
            cfg.set(&key, &text, base).map_err(|e| match e {
                CliError::Core(e) => cfg_err(e.to_string()),
                e => e,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let abs = std::path::absolute(path).map_err(|e| CliError::io(path, e))?;
        let base = abs.parent().unwrap_or(Path::new("/"));
        if path.extension().is_some_and(|e| e == "json") {
            return crate::manifest::RunManifest::config_from_json(&text, path, base);
        }
        Self::from_toml_str(&text, path, base)
    }

    /// Sets one flat key; data paths are resolved against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let resolve = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        match key {
            "data.train" => self.data.train = Some(resolve(value)),
            "data.valid" => self.data.valid = Some(resolve(value)),
            "data.test" => self.data.test = Some(resolve(value)),
            _ => self.train.set(key, value)?,
        }
        Ok(())
    }

    /// Every key and its textual value, data paths first.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (key, path) in DATA_KEYS.iter().zip([&self.data.train, &self.data.valid, &self.data.test]) {
            if let Some(p) = path {
                out.push((key.to_string(), p.display().to_string()));
            }
        }
        out.extend(self.train.to_pairs().into_iter().map(|(k, v)| (k.to_string(), v)));
        out
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        self.to_pairs().into_iter().collect()
    }

    /// Flat `key = value` TOML, one key per line.
    pub fn to_toml(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_pairs() {
            // TOML integers are i64; larger values (such as big seeds) go in quotes
            let integer = v.parse::<i64>().is_ok();
            let float = v.contains('.') && v.parse::<f64>().is_ok_and(f64::is_finite);
            if integer || float {
                s.push_str(&format!("{k} = {v}\n"));
            } else {
                s.push_str(&format!("{k} = {}\n", toml::Value::String(v)));
            }
        }
        s
    }

    pub fn data_paths(&self) -> Result<(&Path, &Path, &Path)> {
        Ok((
            need(&self.data.train, "data.train")?,
            need(&self.data.valid, "data.valid")?,
            need(&self.data.test, "data.test")?,
        ))
    }
}

fn need<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| CliError::Usage(format!("config key '{key}' is required for this command")))
}

//! Run configuration: a TOML file with one table per concern, every key
//! defaulted, plus `section.key=value` command-line overrides.
//!
//! ```toml
//! seed = 7
//! [cqt]            # sample_rate, hop_seconds, f_min, f_max, n_bins, bins_per_octave
//! [segmentation]   # seg_seconds, overlap_seconds
//! [protocol]       # folds, task1_overlap, task2_overlap, task3_overlap, task2_drop_short
//! [model]          # use_gabor, use_se, cardinality, stem_width, stages, se_reduction, input_size
//! [train]          # lr, weight_decay, epochs, batch_size, beta1, beta2, eps, val_fraction, ...
//! [paths]          # manifest, cache, out
//! ```

use std::path::{Path, PathBuf};

use gse_core::nn::ModelConfig;
use gse_core::protocol::NUM_FOLDS;
use gse_core::signal::{CqtParams, Segmentation};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{GseError, Result};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub folds: usize,
    pub task1_overlap: bool,
    pub task2_overlap: bool,
    pub task3_overlap: bool,
    pub task2_drop_short: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            folds: NUM_FOLDS,
            task1_overlap: true,
            task2_overlap: true,
            task3_overlap: true,
            task2_drop_short: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub manifest: PathBuf,
    pub cache: PathBuf,
    pub out: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("data/manifest.csv"),
            cache: PathBuf::from("cache"),
            out: PathBuf::from("results"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub cqt: CqtParams,
    pub segmentation: Segmentation,
    pub protocol: ProtocolConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| GseError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (if given), applies overrides, resolves relative paths
    /// against the config file's directory, and honours `GSE_CACHE_DIR`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| GseError::io(p, e))?,
            None => String::new(),
        };
        let mut table: toml::Table = toml::from_str(&text).map_err(|e| GseError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| GseError::Config(e.to_string()))?;
        if let Some(dir) = path.and_then(Path::parent) {
            for p in [&mut cfg.paths.manifest, &mut cfg.paths.cache, &mut cfg.paths.out] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        if let Some(dir) = std::env::var_os("GSE_CACHE_DIR") {
            cfg.paths.cache = PathBuf::from(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let core = |r: gse_core::Result<()>| r.map_err(|e| GseError::Config(e.to_string()));
        core(self.cqt.validate())?;
        core(self.segmentation.validate())?;
        core(self.model.validate())?;
        self.train.validate()?;
        if self.protocol.folds < 2 {
            return Err(GseError::Config("protocol.folds must be at least 2".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Segmentation used for a task's segment lists.
    pub fn task_segmentation(&self, task: u8) -> Segmentation {
        let overlap = match task {
            1 => self.protocol.task1_overlap,
            2 => self.protocol.task2_overlap,
            _ => self.protocol.task3_overlap,
        };
        if overlap {
            self.segmentation
        } else {
            self.segmentation.without_overlap()
        }
    }

    /// SHA-256 over the canonical JSON of everything except `paths`.
    pub fn hash(&self) -> String {
        let v = serde_json::json!({
            "seed": self.seed,
            "cqt": self.cqt,
            "segmentation": self.segmentation,
            "protocol": self.protocol,
            "model": self.model,
            "train": self.train,
        });
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }

    /// Directory name for cached spectrograms: depends only on the values
    /// that change their content.
    pub fn cache_key(&self) -> String {
        let v = serde_json::json!({ "cqt": self.cqt, "seg_seconds": self.segmentation.seg_seconds });
        hex::encode(&Sha256::digest(v.to_string().as_bytes())[..8])
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Sets `a.b.c=value` in `table`; the value is read as TOML, falling back to
/// a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| GseError::Usage(format!("override {spec:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(GseError::Usage(format!("bad override key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| GseError::Usage(format!("{p} in {key:?} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

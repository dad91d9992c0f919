//! Experiment configuration and provenance hashing.
//!
//! One TOML file drives every subcommand. Keys can be overridden with
//! `--set section.key=value`, where the value is parsed as a TOML value and
//! falls back to a plain string.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attribution::Target;
use crate::baseline::{BaselineParams, SweepGrid};
use crate::catalog::{DatasetKind, HOLO_FPS};
use crate::decision::DEFAULT_MIN_BUFFER;
use crate::encoder::TrainConfig;
use crate::error::{Error, Result};
use crate::synthcam::SynthSpec;

/// Environment variable holding the dataset root.
pub const DATASET_ENV: &str = "HOLOVERIFY_DATASET";

/// First 16 hex digits of the SHA-256 of `value`'s JSON encoding.
pub fn hash_of<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable value");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Falls back to the environment variable, then to `data`.
    pub root: Option<PathBuf>,
    pub kind: DatasetKind,
    /// ROI file; `<root>/roi.toml` when unset.
    pub roi_file: Option<PathBuf>,
    pub target_fps: f64,
    /// Optional MIDV-2020 clips root, evaluated as an attack-only set.
    pub midv2020_root: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { root: None, kind: DatasetKind::Synthetic, roi_file: None, target_fps: HOLO_FPS, midv2020_root: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecisionConfig {
    pub min_buffer: usize,
}

impl Default for DecisionConfig {
    fn default() -> Self {
        Self { min_buffer: DEFAULT_MIN_BUFFER }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributionConfig {
    pub steps: usize,
    pub target: Target,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        Self { steps: 32, target: Target::EmbeddingNorm }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_runs: usize,
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub decision: DecisionConfig,
    pub baseline: BaselineParams,
    pub sweep: SweepGrid,
    pub synth: SynthSpec,
    pub attribution: AttributionConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_runs: 5,
            output_dir: PathBuf::from("runs"),
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
            decision: DecisionConfig::default(),
            baseline: BaselineParams::default(),
            sweep: SweepGrid::default(),
            synth: SynthSpec::default(),
            attribution: AttributionConfig::default(),
        }
    }
}

fn parse_err(what: impl Into<String>, e: impl std::fmt::Display) -> Error {
    Error::Parse { what: what.into(), message: e.to_string() }
}

/// Parses the right-hand side of an override.
fn override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Sets `a.b.c = value` in a TOML table, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key '{key}'")));
    }
    let mut node = table;
    for part in &path[..path.len() - 1] {
        let entry = node.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key '{key}': '{part}' is not a table")))?;
    }
    node.insert(path[path.len() - 1].to_string(), override_value(raw.trim()));
    Ok(())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with(text, &[])
    }

    /// Parses `text` after applying `key=value` overrides.
    pub fn parse_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| parse_err("experiment config", e))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = table.try_into().map_err(|e| parse_err("experiment config", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path` (or the defaults when `None`) and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::parse_with(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_runs == 0 {
            return Err(Error::Config("n_runs must be positive".into()));
        }
        if !(self.dataset.target_fps > 0.0) {
            return Err(Error::Config("dataset.target_fps must be positive".into()));
        }
        if self.attribution.steps == 0 {
            return Err(Error::Config("attribution.steps must be positive".into()));
        }
        self.train.validate()?;
        self.baseline.validate()?;
        self.sweep.validate()?;
        self.synth.validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    pub fn hash(&self) -> String {
        hash_of(self)
    }

    pub fn dataset_root(&self) -> PathBuf {
        self.dataset
            .root
            .clone()
            .or_else(|| std::env::var_os(DATASET_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data"))
    }

    pub fn roi_file(&self) -> PathBuf {
        self.dataset.roi_file.clone().unwrap_or_else(|| self.dataset_root().join("roi.toml"))
    }

    /// Training settings with the experiment seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Architecture;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(ExperimentConfig::parse("").unwrap(), cfg);
    }

    #[test]
    fn overrides_win_over_file_values() {
        let text = "seed = 3\n[train]\nmax_epochs = 4\n";
        let o = vec![
            "train.max_epochs=7".to_string(),
            "train.architecture=resnet18".to_string(),
            "dataset.root=/tmp/x y".to_string(),
        ];
        let cfg = ExperimentConfig::parse_with(text, &o).unwrap();
        assert_eq!((cfg.seed, cfg.train.max_epochs), (3, 7));
        assert_eq!(cfg.train.architecture, Architecture::ResNet18);
        assert_eq!(cfg.dataset.root, Some(PathBuf::from("/tmp/x y")));
        assert_ne!(cfg.hash(), ExperimentConfig::default().hash());
    }

    #[test]
    fn unknown_and_invalid_keys_are_rejected() {
        assert!(ExperimentConfig::parse("bogus = 1").is_err());
        assert!(ExperimentConfig::parse("n_runs = 0").is_err());
        assert!(ExperimentConfig::parse_with("", &["seed".into()]).is_err());
    }
}

//! Run configuration: every knob has a default, so a fully defaulted config
//! runs the synthetic demo end to end. Persisted as a flat key-value file
//! with dotted keys (`encoder.lr=0.001`); the `PROVGUARD_SEED` environment
//! variable overrides the seed.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::AugmentationKind;
use crate::encoder::EmbedLevel;
use crate::error::{Error, Result};
use crate::parse::InputFormat;

pub const SEED_ENV_VAR: &str = "PROVGUARD_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub data_dir: PathBuf,
    pub model_path: PathBuf,
    pub report_dir: PathBuf,
    /// jsonl | csv
    pub data_format: String,
    pub window_ns: i64,
    pub batch_events: usize,
    /// Comma-separated subset of ea,na,fa.
    pub aug_kinds: String,
    pub gamma: f64,
    pub learning_rate: f64,
    pub tau: f64,
    pub epochs: usize,
    pub train_batch: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub edge_features: bool,
    pub extra_edge_labels: Vec<String>,
    pub k: usize,
    pub theta_quantile: f64,
    /// graph | node
    pub detect_level: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            data_dir: PathBuf::from("provguard-data"),
            model_path: PathBuf::from("provguard-model.json"),
            report_dir: PathBuf::from("provguard-reports"),
            data_format: "jsonl".into(),
            window_ns: 1_000_000_000,
            batch_events: 50,
            aug_kinds: "ea,na,fa".into(),
            gamma: 0.5,
            learning_rate: 0.001,
            tau: 0.5,
            epochs: 20,
            train_batch: 50,
            hidden_dim: 128,
            embed_dim: 64,
            edge_features: true,
            extra_edge_labels: Vec::new(),
            k: 8,
            theta_quantile: 0.995,
            detect_level: "graph".into(),
        }
    }
}

impl RunConfig {
    /// Load from a dotted-key file, then apply the environment override.
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    Error::Usage(format!(
                        "{}:{}: expected key=value",
                        path.display(),
                        lineno + 1
                    ))
                })?;
                cfg.set_key(key.trim(), value.trim())?;
            }
        }
        cfg.apply_env();
        Ok(cfg)
    }

    pub fn apply_env(&mut self) {
        if let Ok(seed) = std::env::var(SEED_ENV_VAR) {
            if let Ok(seed) = seed.parse::<u64>() {
                self.seed = seed;
            }
        }
    }

    /// Set one dotted key. Unknown keys are usage errors.
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse::<T>()
                .map_err(|_| Error::Usage(format!("bad value for {key}: {value:?}")))
        }
        match key {
            "seed" => self.seed = parse(key, value)?,
            "data.dir" => self.data_dir = PathBuf::from(value),
            "data.format" => self.data_format = value.to_string(),
            "data.extra_edge_labels" => {
                self.extra_edge_labels = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect();
            }
            "model.path" => self.model_path = PathBuf::from(value),
            "report.dir" => self.report_dir = PathBuf::from(value),
            "graph.window_ns" => self.window_ns = parse(key, value)?,
            "graph.batch_events" => self.batch_events = parse(key, value)?,
            "aug.kinds" => self.aug_kinds = value.to_string(),
            "aug.gamma" => self.gamma = parse(key, value)?,
            "encoder.lr" => self.learning_rate = parse(key, value)?,
            "encoder.tau" => self.tau = parse(key, value)?,
            "encoder.epochs" => self.epochs = parse(key, value)?,
            "encoder.batch" => self.train_batch = parse(key, value)?,
            "encoder.hidden" => self.hidden_dim = parse(key, value)?,
            "encoder.dim" => self.embed_dim = parse(key, value)?,
            "encoder.edge_features" => self.edge_features = parse(key, value)?,
            "detector.k" => self.k = parse(key, value)?,
            "detector.quantile" => self.theta_quantile = parse(key, value)?,
            "detect.level" => self.detect_level = value.to_string(),
            other => return Err(Error::Usage(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if InputFormat::parse(&self.data_format).is_none() {
            return Err(Error::Usage(format!("data.format must be jsonl or csv, got {:?}", self.data_format)));
        }
        if self.window_ns <= 0 {
            return Err(Error::Usage("graph.window_ns must be positive".into()));
        }
        if self.batch_events == 0 {
            return Err(Error::Usage("graph.batch_events must be positive".into()));
        }
        self.parsed_aug_kinds()?;
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Usage(format!("aug.gamma must be in [0,1], got {}", self.gamma)));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Usage("encoder.lr must be positive".into()));
        }
        if self.tau <= 0.0 {
            return Err(Error::Usage("encoder.tau must be positive".into()));
        }
        if self.train_batch == 0 {
            return Err(Error::Usage("encoder.batch must be positive".into()));
        }
        if self.hidden_dim == 0 || self.embed_dim == 0 {
            return Err(Error::Usage("encoder dims must be positive".into()));
        }
        if self.k == 0 {
            return Err(Error::Usage("detector.k must be at least 1".into()));
        }
        if !(0.0 < self.theta_quantile && self.theta_quantile <= 1.0) {
            return Err(Error::Usage(format!(
                "detector.quantile must be in (0,1], got {}",
                self.theta_quantile
            )));
        }
        if EmbedLevel::parse(&self.detect_level).is_none() {
            return Err(Error::Usage(format!(
                "detect.level must be graph or node, got {:?}",
                self.detect_level
            )));
        }
        Ok(())
    }

    pub fn parsed_aug_kinds(&self) -> Result<BTreeSet<AugmentationKind>> {
        let mut kinds = BTreeSet::new();
        for part in self.aug_kinds.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let kind = AugmentationKind::parse(part)
                .ok_or_else(|| Error::Usage(format!("unknown augmentation kind {part:?}")))?;
            kinds.insert(kind);
        }
        if kinds.is_empty() {
            return Err(Error::Usage("aug.kinds must name at least one of ea,na,fa".into()));
        }
        Ok(kinds)
    }

    pub fn parsed_format(&self) -> InputFormat {
        InputFormat::parse(&self.data_format).unwrap_or(InputFormat::Jsonl)
    }

    pub fn parsed_level(&self) -> EmbedLevel {
        EmbedLevel::parse(&self.detect_level).unwrap_or(EmbedLevel::Graph)
    }
}

//! Flat `key = value` run configuration.
//!
//! ```text
//! # comment
//! data.kind = synthetic
//! episode.way = 5
//! sweep.shots = 1,2,3,4,5
//! ```
//!
//! Values resolve in three layers: built-in defaults, then the config file,
//! then command-line overrides. Unknown keys are rejected at every layer.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{
    generate_synthetic, load_csv, split_by_class, Dataset, EpisodeSpec, SplitFractions, SyntheticSpec,
};
use crate::engine::{DataSource, TrainConfig};
use crate::error::{Error, Result};
use crate::loss::{LossConfig, LossKind};

/// Every accepted key with its built-in default. An empty default marks a key
/// that has no default value.
pub const KEYS: &[(&str, &str)] = &[
    ("data.kind", "synthetic"),
    ("data.path", ""),
    ("data.classes", "20"),
    ("data.dim", "32"),
    ("data.per_class", "40"),
    ("data.noise_sigma", "0.3"),
    ("data.seed", "7"),
    ("data.min_class_size", "0"),
    ("split.train", "0.5"),
    ("split.val", "0.25"),
    ("split.test", "0.25"),
    ("split.seed", "0"),
    ("episode.way", "5"),
    ("episode.shot", "1"),
    ("episode.query", "5"),
    ("train.episodes", "2000"),
    ("train.val_every", "200"),
    ("train.val_episodes", "200"),
    ("train.lr", "0.001"),
    ("train.seed", "0"),
    ("model.dims", "64,64,64"),
    ("model.leaky_slope", "0.01"),
    ("loss.kind", "qr"),
    ("loss.ce_temperature", "1"),
    ("eval.episodes", "600"),
    ("eval.seed", "1"),
    ("eval.checkpoint", "model.ckpt"),
    ("sweep.ways", "5"),
    ("sweep.shots", "1,2,3,4,5"),
    ("gradcheck.trials", "100"),
    ("gradcheck.seed", "0"),
    ("output.results", "results.jsonl"),
];

/// Resolved key/value pairs, always containing every key in [`KEYS`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigMap {
    values: BTreeMap<String, String>,
}

fn is_known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

impl Default for ConfigMap {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl ConfigMap {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !is_known(key) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_default()
    }

    /// Applies `key = value` lines from `text`.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{origin}:{}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("{origin}:{}: {}", n + 1, strip(&e))))?;
        }
        Ok(())
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Defaults, then `path` (if any), then `overrides`.
    pub fn resolve<S: AsRef<str>>(path: Option<&Path>, overrides: &[S]) -> Result<Self> {
        let mut map = Self::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            map.apply_text(&text, &p.display().to_string())?;
        }
        map.apply_overrides(overrides)?;
        Ok(map)
    }

    /// Sorted `key = value` lines; feeding them back through
    /// [`Self::apply_text`] reproduces the map.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn as_map(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.get(key);
        if raw.is_empty() {
            return Err(Error::Config(format!("missing required key `{key}`")));
        }
        raw.parse()
            .map_err(|e| Error::Config(format!("`{key} = {raw}`: {e}")))
    }

    fn parse_list(&self, key: &str) -> Result<Vec<usize>> {
        let raw = self.get(key);
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|e| Error::Config(format!("`{key} = {raw}`: {e}")))
            })
            .collect()
    }
}

fn strip(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

/// Typed view of a [`ConfigMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub min_class_size: usize,
    pub split: SplitFractions,
    pub split_seed: u64,
    pub train: TrainConfig,
    pub eval_episodes: usize,
    pub eval_seed: u64,
    pub checkpoint: PathBuf,
    pub sweep_ways: Vec<usize>,
    pub sweep_shots: Vec<usize>,
    pub gradcheck_trials: usize,
    pub gradcheck_seed: u64,
    pub results: PathBuf,
}

impl RunConfig {
    pub fn from_map(m: &ConfigMap) -> Result<Self> {
        let data = match m.get("data.kind") {
            "synthetic" => DataSource::Synthetic(SyntheticSpec {
                n_classes: m.parse("data.classes")?,
                dim: m.parse("data.dim")?,
                per_class: m.parse("data.per_class")?,
                noise_sigma: m.parse("data.noise_sigma")?,
                seed: m.parse("data.seed")?,
            }),
            "csv" => DataSource::Csv { path: m.parse::<String>("data.path")?.into() },
            other => {
                return Err(Error::Config(format!(
                    "`data.kind = {other}`: expected synthetic or csv"
                )))
            }
        };
        let kind: LossKind = m
            .parse::<String>("loss.kind")?
            .parse()
            .map_err(|e| Error::Config(strip(&e)))?;
        let train = TrainConfig {
            loss: LossConfig { kind, ce_temperature: m.parse("loss.ce_temperature")? },
            episode: EpisodeSpec {
                way: m.parse("episode.way")?,
                shot: m.parse("episode.shot")?,
                query: m.parse("episode.query")?,
            },
            train_episodes: m.parse("train.episodes")?,
            val_every: m.parse("train.val_every")?,
            val_episodes: m.parse("train.val_episodes")?,
            lr: m.parse("train.lr")?,
            seed: m.parse("train.seed")?,
            hidden_dims: m.parse_list("model.dims")?,
            leaky_slope: m.parse("model.leaky_slope")?,
            data: data.clone(),
        };
        train.validate().map_err(|e| Error::Config(strip(&e)))?;
        Ok(Self {
            data,
            min_class_size: m.parse("data.min_class_size")?,
            split: SplitFractions {
                train: m.parse("split.train")?,
                val: m.parse("split.val")?,
                test: m.parse("split.test")?,
            },
            split_seed: m.parse("split.seed")?,
            train,
            eval_episodes: m.parse("eval.episodes")?,
            eval_seed: m.parse("eval.seed")?,
            checkpoint: m.parse::<String>("eval.checkpoint")?.into(),
            sweep_ways: m.parse_list("sweep.ways")?,
            sweep_shots: m.parse_list("sweep.shots")?,
            gradcheck_trials: m.parse("gradcheck.trials")?,
            gradcheck_seed: m.parse("gradcheck.seed")?,
            results: m.parse::<String>("output.results")?.into(),
        })
    }

    /// The full dataset described by `data.*`, after the class-size filter.
    pub fn load_dataset(&self) -> Result<Dataset> {
        let d = match &self.data {
            DataSource::Synthetic(spec) => generate_synthetic(spec)?,
            DataSource::Csv { path } => load_csv(path)?,
        };
        Ok(d.retain_min_class_size(self.min_class_size))
    }

    /// Train / validation / test datasets.
    pub fn load_splits(&self) -> Result<(Dataset, Dataset, Dataset)> {
        split_by_class(&self.load_dataset()?, self.split, self.split_seed)
    }
}

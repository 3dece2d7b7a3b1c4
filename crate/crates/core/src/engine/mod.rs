//! Training, evaluation, sweeps and gradient checks.

mod eval;
mod gradcheck;
mod sweep;
mod train;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{EpisodeSpec, SyntheticSpec};
use crate::error::{Error, Result};
use crate::loss::{LossConfig, LossKind};
use crate::model::DEFAULT_LR;

pub use eval::{evaluate, evaluate_with, score_episode, EpisodeScore, Execution, Interval, Metrics, Z_95};
pub use gradcheck::{
    grad_check, parameter_check, random_partition, similarity_check, GradCheckReport, KINK_MARGIN, NORM_MARGIN,
    PARAM_THRESHOLD, SIM_THRESHOLD,
};
pub use sweep::{sweep, ResultRecord, SweepCell};
pub use train::{check_eligible, train, TrainHistory, TrainOutcome, ValidationPoint};

/// Where the feature data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub episode: EpisodeSpec,
    pub train_episodes: usize,
    pub val_every: usize,
    pub val_episodes: usize,
    pub lr: f64,
    pub seed: u64,
    /// Layer widths after the input layer; the input width comes from the data.
    pub hidden_dims: Vec<usize>,
    pub leaky_slope: f64,
    pub data: DataSource,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::new(LossKind::Qr),
            episode: EpisodeSpec { way: 5, shot: 1, query: 5 },
            train_episodes: 2000,
            val_every: 200,
            val_episodes: 200,
            lr: DEFAULT_LR,
            seed: 0,
            hidden_dims: vec![64, 64, 64],
            leaky_slope: 0.01,
            data: DataSource::Synthetic(SyntheticSpec {
                n_classes: 20,
                dim: 32,
                per_class: 40,
                noise_sigma: 0.3,
                seed: 7,
            }),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.episode.validate()?;
        if self.val_every == 0 || self.val_episodes < 2 {
            return Err(Error::InvalidArgument(format!(
                "val_every must be positive and val_episodes ≥ 2 (got {} and {})",
                self.val_every, self.val_episodes
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.loss.ce_temperature > 0.0 && self.loss.ce_temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "ce temperature must be positive, got {}",
                self.loss.ce_temperature
            )));
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "model dims must be a nonempty list of positive widths, got {:?}",
                self.hidden_dims
            )));
        }
        Ok(())
    }

    /// Full layer list for input width `input_dim`.
    pub fn model_dims(&self, input_dim: usize) -> Vec<usize> {
        std::iter::once(input_dim).chain(self.hidden_dims.iter().copied()).collect()
    }
}

/// Independent seed for one purpose of a run (splitmix64 finalizer).
pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    let mut z = seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

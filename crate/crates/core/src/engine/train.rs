use serde::{Deserialize, Serialize};

use super::{derive_seed, evaluate, Metrics, TrainConfig};
use crate::data::{episode_rng, sample_episode, Dataset, EpisodeSpec};
use crate::error::{Error, Result};
use crate::model::{episode_gradients, mlp_init, AdamState, MlpParams};

const INIT_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;
const VAL_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    /// Number of training episodes completed.
    pub episode: usize,
    /// Mean training loss since the previous validation point.
    pub train_loss: f64,
    pub val: Metrics,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub points: Vec<ValidationPoint>,
    /// Episode count of the point with the highest validation accuracy.
    pub best_val_episode: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: MlpParams,
    pub history: TrainHistory,
}

/// Fails unless `d` has `way` classes holding at least `shot + query` samples.
pub fn check_eligible(d: &Dataset, spec: &EpisodeSpec, name: &str) -> Result<()> {
    let eligible = d
        .classes
        .iter()
        .filter(|c| c.samples.len() >= spec.samples_per_class())
        .count();
    if eligible < spec.way {
        return Err(Error::Insufficient(format!(
            "{name} set has {eligible} classes with ≥ {} samples; {}-way episodes need {}",
            spec.samples_per_class(),
            spec.way,
            spec.way
        )));
    }
    Ok(())
}

/// Episodic training, one Adam step per episode.
///
/// Every `val_every` episodes (and after the last one) the model is scored on
/// the same `val_episodes` validation episodes; the parameters with the best
/// validation accuracy are returned. With zero training episodes the freshly
/// initialised parameters come back with an empty history.
pub fn train(cfg: &TrainConfig, train_set: &Dataset, val_set: &Dataset) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_eligible(train_set, &cfg.episode, "training")?;
    check_eligible(val_set, &cfg.episode, "validation")?;
    if train_set.dim != val_set.dim {
        return Err(Error::DimensionMismatch { expected: train_set.dim, found: val_set.dim });
    }

    let mut params = mlp_init(&cfg.model_dims(train_set.dim), cfg.leaky_slope, derive_seed(cfg.seed, INIT_STREAM))?;
    let mut history = TrainHistory::default();
    if cfg.train_episodes == 0 {
        return Ok(TrainOutcome { params, history });
    }

    let train_seed = derive_seed(cfg.seed, TRAIN_STREAM);
    let val_seed = derive_seed(cfg.seed, VAL_STREAM);
    let mut adam = AdamState::new(&params);
    let mut best = params.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let (mut loss_sum, mut loss_count) = (0.0, 0usize);

    for e in 0..cfg.train_episodes {
        let episode = sample_episode(train_set, &cfg.episode, &mut episode_rng(train_seed, e as u64))?;
        let (loss, grads) = episode_gradients(&params, &episode, &cfg.loss)?;
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::Diverged { episode: e, loss });
        }
        adam.step(&mut params, &grads, cfg.lr)?;
        loss_sum += loss;
        loss_count += 1;

        let done = e + 1;
        if done % cfg.val_every == 0 || done == cfg.train_episodes {
            let val = evaluate(&params, val_set, &cfg.episode, cfg.val_episodes, val_seed)?;
            if val.accuracy.mean > best_acc {
                best_acc = val.accuracy.mean;
                best = params.clone();
                history.best_val_episode = Some(done);
            }
            history.points.push(ValidationPoint {
                episode: done,
                train_loss: loss_sum / loss_count as f64,
                val,
            });
            loss_sum = 0.0;
            loss_count = 0;
        }
    }
    Ok(TrainOutcome { params: best, history })
}

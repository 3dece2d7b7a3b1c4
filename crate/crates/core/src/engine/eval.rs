use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{episode_rng, sample_episode, Dataset, EpisodeSpec};
use crate::error::{Error, Result};
use crate::model::{forward_episode, predict, MlpParams};

/// z-value of a two-sided 95% normal interval.
pub const Z_95: f64 = 1.96;

/// Scores of one evaluation episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeScore {
    pub accuracy: f64,
    pub precision: f64,
    pub f1: f64,
}

impl EpisodeScore {
    /// Accuracy plus macro precision and F1 over `way` labels. A label that is
    /// never predicted has precision 0; F1 is 0 when precision and recall are.
    pub fn from_predictions(truth: &[usize], predicted: &[usize], way: usize) -> Self {
        let mut tp = vec![0usize; way];
        let mut predicted_count = vec![0usize; way];
        let mut actual_count = vec![0usize; way];
        for (&t, &p) in truth.iter().zip(predicted) {
            actual_count[t] += 1;
            predicted_count[p] += 1;
            if t == p {
                tp[t] += 1;
            }
        }
        let correct: usize = tp.iter().sum();
        let mut precision_sum = 0.0;
        let mut f1_sum = 0.0;
        for j in 0..way {
            let precision = if predicted_count[j] == 0 { 0.0 } else { tp[j] as f64 / predicted_count[j] as f64 };
            let recall = if actual_count[j] == 0 { 0.0 } else { tp[j] as f64 / actual_count[j] as f64 };
            precision_sum += precision;
            if precision + recall > 0.0 {
                f1_sum += 2.0 * precision * recall / (precision + recall);
            }
        }
        Self {
            accuracy: correct as f64 / truth.len().max(1) as f64,
            precision: precision_sum / way as f64,
            f1: f1_sum / way as f64,
        }
    }
}

/// Mean with a 95% half-width `1.96 · s / √n` (sample standard deviation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub ci95: f64,
}

impl Interval {
    fn from_samples(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self { mean, ci95: Z_95 * var.sqrt() / n.sqrt() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Interval,
    pub macro_precision: Interval,
    pub macro_f1: Interval,
    pub n_episodes: usize,
}

impl Metrics {
    /// Aggregates in slice order. Needs at least two episodes.
    pub fn from_scores(scores: &[EpisodeScore]) -> Result<Self> {
        if scores.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 episodes for an interval, got {}",
                scores.len()
            )));
        }
        Ok(Self {
            accuracy: Interval::from_samples(scores.iter().map(|s| s.accuracy)),
            macro_precision: Interval::from_samples(scores.iter().map(|s| s.precision)),
            macro_f1: Interval::from_samples(scores.iter().map(|s| s.f1)),
            n_episodes: scores.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

/// Scores one episode drawn from stream `index` of `seed`.
pub fn score_episode(params: &MlpParams, d: &Dataset, spec: &EpisodeSpec, seed: u64, index: u64) -> Result<EpisodeScore> {
    let episode = sample_episode(d, spec, &mut episode_rng(seed, index))?;
    let pass = forward_episode(params, &episode)?;
    let predicted = predict(&pass.protos, &pass.query);
    Ok(EpisodeScore::from_predictions(&episode.query_labels(), &predicted, spec.way))
}

/// Nearest-prototype evaluation over `n_episodes` independent episodes.
pub fn evaluate(params: &MlpParams, d: &Dataset, spec: &EpisodeSpec, n_episodes: usize, seed: u64) -> Result<Metrics> {
    evaluate_with(params, d, spec, n_episodes, seed, Execution::Parallel)
}

/// [`evaluate`] with explicit scheduling. Both modes produce identical
/// metrics: every episode owns its random stream and scores are aggregated
/// in episode order.
pub fn evaluate_with(
    params: &MlpParams,
    d: &Dataset,
    spec: &EpisodeSpec,
    n_episodes: usize,
    seed: u64,
    execution: Execution,
) -> Result<Metrics> {
    if n_episodes < 2 {
        return Err(Error::InvalidArgument(format!(
            "evaluation needs at least 2 episodes, got {n_episodes}"
        )));
    }
    spec.validate()?;
    let scores: Vec<EpisodeScore> = match execution {
        Execution::Serial => (0..n_episodes as u64)
            .map(|i| score_episode(params, d, spec, seed, i))
            .collect::<Result<_>>()?,
        Execution::Parallel => (0..n_episodes as u64)
            .into_par_iter()
            .map(|i| score_episode(params, d, spec, seed, i))
            .collect::<Result<_>>()?,
    };
    Metrics::from_scores(&scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_interval() {
        let scores: Vec<EpisodeScore> = [0.6, 0.8, 1.0]
            .iter()
            .map(|&a| EpisodeScore { accuracy: a, precision: a, f1: a })
            .collect();
        let m = Metrics::from_scores(&scores).unwrap();
        assert!((m.accuracy.mean - 0.8).abs() < 1e-15);
        let expected = 1.96 * 0.2 / 3f64.sqrt();
        assert!((m.accuracy.ci95 - expected).abs() < 1e-15);
        assert!((m.accuracy.ci95 - 0.2263).abs() < 1e-4);
        assert!(Metrics::from_scores(&scores[..1]).is_err());
    }

    #[test]
    fn macro_scores() {
        // 3 labels, truth 0,0,1,1,2,2; label 2 is never predicted.
        let s = EpisodeScore::from_predictions(&[0, 0, 1, 1, 2, 2], &[0, 0, 1, 0, 1, 1], 3);
        assert!((s.accuracy - 0.5).abs() < 1e-15);
        // precision: 2/3, 1/3, 0
        assert!((s.precision - (2.0 / 3.0 + 1.0 / 3.0) / 3.0).abs() < 1e-15);
        // recall: 1, 1/2, 0 → f1: 0.8, 0.4, 0
        assert!((s.f1 - 0.4).abs() < 1e-15);

        let perfect = EpisodeScore::from_predictions(&[0, 1, 2], &[0, 1, 2], 3);
        assert_eq!((perfect.accuracy, perfect.precision, perfect.f1), (1.0, 1.0, 1.0));
    }
}

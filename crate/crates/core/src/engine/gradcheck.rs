use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{episode_rng, generate_synthetic, sample_episode, EpisodeSpec, SyntheticSpec};
use crate::error::{Error, Result};
use crate::loss::{self, compute_margins, CePartition, LossConfig, LossKind, Partition, SimilarityPartition};
use crate::model::{backprop_episode, episode_loss, mlp_init};
use crate::numeric::{finite_diff_gradient, relative_error, DEFAULT_FD_STEP};

/// Pass bound on the similarity-level relative error.
pub const SIM_THRESHOLD: f64 = 1e-6;
/// Pass bound on the parameter-level relative error.
pub const PARAM_THRESHOLD: f64 = 1e-4;
/// Differences below this are treated as exact.
pub const ABS_FLOOR: f64 = 1e-9;

const TINY_DIMS: [usize; 3] = [6, 8, 4];
const TINY_EPISODE: EpisodeSpec = EpisodeSpec { way: 3, shot: 2, query: 2 };

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub loss: LossKind,
    pub trials: usize,
    pub seed: u64,
    pub sim_max_rel_error: f64,
    pub param_max_rel_error: f64,
    pub sim_threshold: f64,
    pub param_threshold: f64,
    pub passed: bool,
}

/// Compares analytic gradients with central differences.
///
/// Each trial checks one random similarity layout (2 or 5 categories, up to
/// 5 positives and 30 negatives per category, similarities uniform in
/// `[-1, 1]`) and one end-to-end episode through a `6 → 8 → 4` network on a
/// 3-way 2-shot 2-query episode. Adaptive margins are held at their values at
/// the base point, matching how the backward pass treats them.
pub fn grad_check(kind: LossKind, trials: usize, seed: u64) -> Result<GradCheckReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("grad_check needs at least one trial".into()));
    }
    let cfg = LossConfig::new(kind);
    let mut sim_max = 0.0f64;
    let mut param_max = 0.0f64;
    for t in 0..trials as u64 {
        let mut rng = episode_rng(seed, 2 * t);
        let partition = random_partition(kind, &mut rng);
        sim_max = sim_max.max(similarity_check(&cfg, &partition)?);
        param_max = param_max.max(parameter_check(&cfg, seed, t)?);
    }
    Ok(GradCheckReport {
        loss: kind,
        trials,
        seed,
        sim_max_rel_error: sim_max,
        param_max_rel_error: param_max,
        sim_threshold: SIM_THRESHOLD,
        param_threshold: PARAM_THRESHOLD,
        passed: sim_max < SIM_THRESHOLD && param_max < PARAM_THRESHOLD,
    })
}

/// Random layout with the shape ranges used by [`grad_check`].
pub fn random_partition<R: Rng + ?Sized>(kind: LossKind, rng: &mut R) -> Partition {
    let way = if rng.random_bool(0.5) { 2 } else { 5 };
    if kind.is_relative() {
        let cats: Vec<(Vec<f64>, Vec<f64>)> = (0..way)
            .map(|_| {
                let np = rng.random_range(1..=5);
                let nn = rng.random_range(1..=30);
                (
                    (0..np).map(|_| rng.random_range(-1.0..=1.0)).collect(),
                    (0..nn).map(|_| rng.random_range(-1.0..=1.0)).collect(),
                )
            })
            .collect();
        Partition::Relative(SimilarityPartition::from_values(&cats))
    } else {
        let rows = rng.random_range(1..=5) * way;
        Partition::CrossEntropy(CePartition {
            sims: (0..rows)
                .map(|_| (0..way).map(|_| rng.random_range(-1.0..=1.0)).collect())
                .collect(),
            labels: (0..rows).map(|_| rng.random_range(0..way)).collect(),
        })
    }
}

fn frozen(cfg: &LossConfig, p: &Partition) -> Option<Vec<loss::MarginPair>> {
    match (cfg.kind, p) {
        (LossKind::QrMargin, Partition::Relative(sp)) => Some(compute_margins(sp)),
        _ => None,
    }
}

fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| relative_error(*a, *n, ABS_FLOOR))
        .fold(0.0, f64::max)
}

/// Largest relative error between analytic and numerical `∂L/∂s`.
pub fn similarity_check(cfg: &LossConfig, partition: &Partition) -> Result<f64> {
    let margins = frozen(cfg, partition);
    let analytic = loss::compute(cfg, partition, margins.as_deref())?.grad_values();
    let numeric = finite_diff_gradient(
        |v| {
            loss::compute(cfg, &partition.with_values(v), margins.as_deref())
                .map_or(f64::NAN, |r| r.value)
        },
        &partition.values(),
        DEFAULT_FD_STEP,
    )?;
    Ok(max_rel_error(&analytic, &numeric))
}

/// Hidden pre-activations closer than this to the activation kink make a
/// central difference straddle it, so such draws are replaced.
pub const KINK_MARGIN: f64 = 1e-3;
/// Draws that normalize a vector shorter than this are replaced too: the
/// curvature of `z / |z|` grows without bound as `|z| → 0` and swamps the
/// central difference.
pub const NORM_MARGIN: f64 = 0.05;
const MAX_REDRAWS: u64 = 64;

/// Largest relative error between backpropagated and numerical `∂L/∂θ` for
/// trial `trial` of the tiny network.
///
/// Draws whose hidden pre-activations come within [`KINK_MARGIN`] of zero, or
/// that normalize a vector shorter than [`NORM_MARGIN`], are redrawn
/// deterministically.
pub fn parameter_check(cfg: &LossConfig, seed: u64, trial: u64) -> Result<f64> {
    for redraw in 0..MAX_REDRAWS {
        let sub = trial.wrapping_add(redraw.wrapping_mul(0x1_0000_0000));
        let data = generate_synthetic(&SyntheticSpec {
            n_classes: 5,
            dim: TINY_DIMS[0],
            per_class: 6,
            noise_sigma: 0.5,
            seed: seed ^ sub.rotate_left(17),
        })?;
        let episode = sample_episode(&data, &TINY_EPISODE, &mut episode_rng(seed, 2 * sub + 1))?;
        let params = mlp_init(&TINY_DIMS, 0.01, seed.wrapping_add(sub))?;

        let (result, partition, pass) = episode_loss(&params, &episode, cfg, None)?;
        if pass.min_hidden_preactivation() < KINK_MARGIN || pass.min_normalized_norm() < NORM_MARGIN {
            continue;
        }
        let margins = frozen(cfg, &partition);
        let analytic = backprop_episode(&params, &result.grads, &pass)?.flatten();
        let numeric = finite_diff_gradient(
            |flat| {
                params
                    .with_flat(flat)
                    .and_then(|p| episode_loss(&p, &episode, cfg, margins.as_deref()))
                    .map_or(f64::NAN, |(r, _, _)| r.value)
            },
            &params.flatten(),
            DEFAULT_FD_STEP,
        )?;
        return Ok(max_rel_error(&analytic, &numeric));
    }
    Err(Error::InvalidArgument(format!(
        "no well-conditioned draw found for trial {trial}"
    )))
}

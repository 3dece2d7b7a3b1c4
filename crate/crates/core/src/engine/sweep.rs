use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, train, Metrics, TrainConfig};
use crate::data::{Dataset, EpisodeSpec};
use crate::error::Result;
use crate::loss::LossKind;

/// One row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub loss: LossKind,
    pub way: usize,
    pub shot: usize,
    pub acc: f64,
    pub acc_ci: f64,
    pub prec: f64,
    pub prec_ci: f64,
    pub f1: f64,
    pub f1_ci: f64,
    pub episodes: usize,
    pub seed: u64,
}

impl ResultRecord {
    pub fn new(loss: LossKind, spec: &EpisodeSpec, m: &Metrics, seed: u64) -> Self {
        Self {
            loss,
            way: spec.way,
            shot: spec.shot,
            acc: m.accuracy.mean,
            acc_ci: m.accuracy.ci95,
            prec: m.macro_precision.mean,
            prec_ci: m.macro_precision.ci95,
            f1: m.macro_f1.mean,
            f1_ci: m.macro_f1.ci95,
            episodes: m.n_episodes,
            seed,
        }
    }

    pub const TSV_HEADER: &'static str = "loss\tway\tshot\tacc\tacc_ci\tprec\tprec_ci\tf1\tf1_ci\tepisodes\tseed";

    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}",
            self.loss, self.way, self.shot, self.acc, self.acc_ci, self.prec, self.prec_ci, self.f1, self.f1_ci,
            self.episodes, self.seed
        )
    }
}

/// Outcome of one (way, shot) cell. A failed cell keeps its error message.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub loss: LossKind,
    pub way: usize,
    pub shot: usize,
    pub outcome: std::result::Result<Metrics, String>,
}

impl SweepCell {
    pub fn record(&self, seed: u64, query: usize) -> Option<ResultRecord> {
        let spec = EpisodeSpec { way: self.way, shot: self.shot, query };
        self.outcome.as_ref().ok().map(|m| ResultRecord::new(self.loss, &spec, m, seed))
    }
}

/// Trains and evaluates one model per (way, shot) pair, ways outermost.
///
/// Cells run concurrently; the returned table is in grid order regardless.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    base: &TrainConfig,
    ways: &[usize],
    shots: &[usize],
    train_set: &Dataset,
    val_set: &Dataset,
    test_set: &Dataset,
    eval_episodes: usize,
    eval_seed: u64,
) -> Vec<SweepCell> {
    let grid: Vec<(usize, usize)> = ways
        .iter()
        .flat_map(|&w| shots.iter().map(move |&s| (w, s)))
        .collect();
    grid.par_iter()
        .map(|&(way, shot)| {
            let mut cfg = base.clone();
            cfg.episode = EpisodeSpec { way, shot, query: base.episode.query };
            let run = || -> Result<Metrics> {
                let outcome = train(&cfg, train_set, val_set)?;
                evaluate(&outcome.params, test_set, &cfg.episode, eval_episodes, eval_seed)
            };
            SweepCell { loss: base.loss.kind, way, shot, outcome: run().map_err(|e| e.to_string()) }
        })
        .collect()
}

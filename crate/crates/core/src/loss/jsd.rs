use super::{LossResult, Polarity, SimGrad, SimilarityPartition};
use crate::error::Result;

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Jensen-Shannon mutual-information objective, negated so that lower is
/// better: `Σ_j [1/|P_j| Σ softplus(−s⁺) + 1/|N_j| Σ softplus(s⁻)]`.
///
/// Each entry's gradient depends on that entry alone.
pub fn jsd_mi_loss(p: &SimilarityPartition) -> Result<LossResult> {
    p.validate()?;
    let mut value = 0.0;
    let mut grads = Vec::new();
    for (j, cat) in p.categories.iter().enumerate() {
        let w_pos = 1.0 / cat.pos.len() as f64;
        let w_neg = 1.0 / cat.neg.len() as f64;
        for e in &cat.pos {
            value += w_pos * softplus(-e.sim);
            grads.push(SimGrad {
                category: j,
                source: e.source,
                polarity: Polarity::Positive,
                grad: -w_pos * sigmoid(-e.sim),
            });
        }
        for e in &cat.neg {
            value += w_neg * softplus(e.sim);
            grads.push(SimGrad {
                category: j,
                source: e.source,
                polarity: Polarity::Negative,
                grad: w_neg * sigmoid(e.sim),
            });
        }
    }
    Ok(LossResult { value, grads })
}

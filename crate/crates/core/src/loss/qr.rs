use super::{LossResult, MarginPair, Polarity, SimGrad, SimilarityPartition};
use crate::error::{Error, Result};

/// Query-relative loss:
/// `Σ_j log(1 + 1/(2|P_j|) Σ exp(−s⁺) + 1/(2|N_j|) Σ exp(s⁻))`.
pub fn qr_loss(p: &SimilarityPartition) -> Result<LossResult> {
    p.validate()?;
    let zeros = vec![MarginPair::default(); p.num_categories()];
    Ok(shifted_qr(p, &zeros))
}

/// Query-relative loss with adaptive hard margins computed from `p` itself.
///
/// The margins enter as constants: no gradient flows through them.
pub fn qr_margin_loss(p: &SimilarityPartition) -> Result<LossResult> {
    p.validate()?;
    let margins = compute_margins(p);
    Ok(shifted_qr(p, &margins))
}

/// [`qr_margin_loss`] with externally supplied margins, one per category.
pub fn qr_margin_loss_with(p: &SimilarityPartition, margins: &[MarginPair]) -> Result<LossResult> {
    p.validate()?;
    if margins.len() != p.num_categories() {
        return Err(Error::Shape(format!(
            "{} margin pairs for {} categories",
            margins.len(),
            p.num_categories()
        )));
    }
    Ok(shifted_qr(p, margins))
}

/// Per-category margin statistics: `e_plus` averages the positive entries
/// below zero, `e_minus` averages the negative entries above zero.
pub fn compute_margins(p: &SimilarityPartition) -> Vec<MarginPair> {
    p.categories
        .iter()
        .map(|c| MarginPair {
            e_plus: filtered_mean(c.pos.iter().map(|e| e.sim).filter(|s| *s < 0.0)),
            e_minus: filtered_mean(c.neg.iter().map(|e| e.sim).filter(|s| *s > 0.0)),
        })
        .collect()
}

fn filtered_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

// Positive exponents are −s + e_minus, negative exponents s − e_plus. Each
// category term log(1 + Σ w·exp(x)) is evaluated as m + log(exp(−m) + Σ w·exp(x − m))
// with m = max(0, max x).
fn shifted_qr(p: &SimilarityPartition, margins: &[MarginPair]) -> LossResult {
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(p.values().len());
    for (j, (cat, margin)) in p.categories.iter().zip(margins).enumerate() {
        let w_pos = 1.0 / (2.0 * cat.pos.len() as f64);
        let w_neg = 1.0 / (2.0 * cat.neg.len() as f64);
        let pos_exp: Vec<f64> = cat.pos.iter().map(|e| -e.sim + margin.e_minus).collect();
        let neg_exp: Vec<f64> = cat.neg.iter().map(|e| e.sim - margin.e_plus).collect();

        let m = pos_exp
            .iter()
            .chain(&neg_exp)
            .fold(0.0f64, |acc, &x| acc.max(x));
        let pos_terms: Vec<f64> = pos_exp.iter().map(|x| w_pos * (x - m).exp()).collect();
        let neg_terms: Vec<f64> = neg_exp.iter().map(|x| w_neg * (x - m).exp()).collect();
        let scaled = (-m).exp() + pos_terms.iter().sum::<f64>() + neg_terms.iter().sum::<f64>();
        value += m + scaled.ln();

        grads.extend(cat.pos.iter().zip(&pos_terms).map(|(e, t)| SimGrad {
            category: j,
            source: e.source,
            polarity: Polarity::Positive,
            grad: -t / scaled,
        }));
        grads.extend(cat.neg.iter().zip(&neg_terms).map(|(e, t)| SimGrad {
            category: j,
            source: e.source,
            polarity: Polarity::Negative,
            grad: t / scaled,
        }));
    }
    LossResult { value, grads }
}

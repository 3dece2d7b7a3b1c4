use super::{CePartition, LossResult, Polarity, SimGrad, Source};
use crate::error::{Error, Result};

/// Softmax cross entropy of each query row against its labelled category:
/// `−Σ_i log softmax(s_i / τ)[y_i]`.
///
/// Gradients are `(softmax − onehot) / τ`. Row `i` is reported with source
/// `Query(i)`; the labelled column is the positive entry.
pub fn ce_loss(p: &CePartition, temperature: f64) -> Result<LossResult> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if p.sims.is_empty() {
        return Err(Error::EmptyQuerySet);
    }
    if p.labels.len() != p.sims.len() {
        return Err(Error::Shape(format!(
            "{} labels for {} query rows",
            p.labels.len(),
            p.sims.len()
        )));
    }
    let width = p.sims[0].len();
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(p.sims.len() * width);
    for (i, (row, &label)) in p.sims.iter().zip(&p.labels).enumerate() {
        if row.len() != width || width == 0 {
            return Err(Error::Shape(format!("row {i} has {} entries, expected {width}", row.len())));
        }
        if label >= width {
            return Err(Error::Shape(format!("label {label} of row {i} outside 0..{width}")));
        }
        if row.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("similarity row {i}")));
        }
        let logits: Vec<f64> = row.iter().map(|s| s / temperature).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        value += max + total.ln() - logits[label];
        for (j, e) in exps.iter().enumerate() {
            let target = if j == label { 1.0 } else { 0.0 };
            grads.push(SimGrad {
                category: j,
                source: Source::Query(i),
                polarity: if j == label { Polarity::Positive } else { Polarity::Negative },
                grad: (e / total - target) / temperature,
            });
        }
    }
    Ok(LossResult { value: value.max(0.0), grads })
}

//! Dense-vector primitives shared by the rest of the crate.
//!
//! Everything here is `f64`. The gradient checks elsewhere in the crate rely on
//! double precision to reach their tolerances.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Norms at or below this are treated as zero.
pub const NORM_EPSILON: f64 = 1e-12;

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// A vector with unit L2 norm.
///
/// Only constructed through [`l2_normalize`] (or the crate-internal unchecked
/// constructor used when the norm is already guaranteed), so holders can rely
/// on `‖v‖ = 1` up to rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    #[cfg(test)]
    pub(crate) fn new_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for UnitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Scales `v` to unit length.
///
/// Fails with [`Error::Degenerate`] when `‖v‖ ≤ 1e-12` and with
/// [`Error::NonFinite`] when any entry is NaN or infinite.
pub fn l2_normalize(v: &[f64]) -> Result<UnitVector> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("vector to normalize".into()));
    }
    let n = norm(v);
    if n <= NORM_EPSILON {
        return Err(Error::Degenerate {
            what: "vector to normalize".into(),
            norm: n,
            threshold: NORM_EPSILON,
        });
    }
    Ok(UnitVector(v.iter().map(|x| x / n).collect()))
}

/// Inner product of two unit vectors, clamped to `[-1, 1]`.
pub fn cosine_similarity(u: &UnitVector, v: &UnitVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            found: v.dim(),
        });
    }
    Ok(dot(&u.0, &v.0).clamp(-1.0, 1.0))
}

/// Pulls a gradient w.r.t. `u = z / ‖z‖` back to a gradient w.r.t. `z`:
/// `(I − u uᵀ) g / ‖z‖`.
pub fn normalize_backward(unit: &[f64], z_norm: f64, grad: &[f64]) -> Vec<f64> {
    let radial = dot(unit, grad);
    unit.iter()
        .zip(grad)
        .map(|(u, g)| (g - radial * u) / z_norm)
        .collect()
}

/// Central-difference gradient of `f` at `x`.
///
/// Each coordinate costs two evaluations of `f`. A non-finite value at either
/// probe is reported with the offending coordinate.
pub fn finite_diff_gradient<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe);
        probe[i] = orig - h;
        let minus = f(&probe);
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::FiniteDiffProbe { coordinate: i });
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Relative error between an analytic and a numerical derivative.
///
/// Differences at or below `abs_floor` count as exact; otherwise the
/// difference is scaled by the larger magnitude of the two values.
pub fn relative_error(analytic: f64, numeric: f64, abs_floor: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= abs_floor {
        0.0
    } else {
        diff / analytic.abs().max(numeric.abs())
    }
}

/// Uniform random direction on the unit sphere.
pub fn random_unit<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> UnitVector {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(u) = l2_normalize(&v) {
            return u;
        }
    }
}

/// Random orthogonal matrix (row-major, `dim × dim`) via Gram-Schmidt on a
/// Gaussian matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while rows.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for r in &rows {
            let p = dot(&v, r);
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= p * b);
        }
        if let Ok(u) = l2_normalize(&v) {
            rows.push(u.into_inner());
        }
    }
    rows.concat()
}

/// `m · v` for a row-major `rows × v.len()` matrix.
pub fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    m.chunks_exact(v.len()).map(|row| dot(row, v)).collect()
}

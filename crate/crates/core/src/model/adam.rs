use crate::error::{Error, Result};

use super::mlp::{MlpParams, ParamGrads};

pub const DEFAULT_LR: f64 = 1e-3;

/// Bias-corrected Adam over the flattened parameters of an [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &MlpParams) -> Self {
        let n = params.num_params();
        Self {
            step_count: 0,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One update in place. Non-finite gradients abort the step before any
    /// parameter is touched.
    pub fn step(&mut self, params: &mut MlpParams, grads: &ParamGrads, lr: f64) -> Result<()> {
        if self.first_moment.len() != params.num_params() {
            return Err(Error::DimensionMismatch {
                expected: params.num_params(),
                found: self.first_moment.len(),
            });
        }
        if grads.iter().count() != params.num_params() {
            return Err(Error::DimensionMismatch {
                expected: params.num_params(),
                found: grads.iter().count(),
            });
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("parameter gradients".into()));
        }
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {lr}")));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (((p, g), m), v) in params
            .params_mut()
            .zip(grads.iter())
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numeric::{l2_normalize, normalize_backward, UnitVector};

/// Fully connected layer, `weights` row-major with shape `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }
}

/// Embedding MLP. Hidden layers use a leaky ReLU, the last layer is affine and
/// its output is L2-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<DenseLayer>,
    pub leaky_slope: f64,
}

/// Gradients with the same layout as [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl ParamGrads {
    pub fn zeros_like(p: &MlpParams) -> Self {
        Self {
            weights: p.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: p.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    /// Flattened in [`MlpParams::flatten`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.bias) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().zip(&self.bias).flat_map(|(w, b)| w.iter().chain(b))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|g| g.is_finite())
    }
}

/// Per-sample intermediates of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrace {
    /// Input to each layer (the raw features for layer 0).
    pub layer_inputs: Vec<Vec<f64>>,
    /// Affine output of each layer before its activation.
    pub pre_activations: Vec<Vec<f64>>,
    /// Norm of the final pre-normalization output.
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub traces: Vec<SampleTrace>,
}

/// He-style initialisation: weights `N(0, 2 / fan_in)`, zero biases.
pub fn mlp_init(dims: &[usize], leaky_slope: f64, seed: u64) -> Result<MlpParams> {
    if dims.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "an MLP needs at least input and output dims, got {dims:?}"
        )));
    }
    if dims.iter().any(|&d| d < 1) {
        return Err(Error::InvalidArgument(format!("layer dims must be ≥ 1, got {dims:?}")));
    }
    if !leaky_slope.is_finite() {
        return Err(Error::InvalidArgument(format!("leaky slope must be finite, got {leaky_slope}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = dims
        .windows(2)
        .map(|w| {
            let (inputs, outputs) = (w[0], w[1]);
            let dist = Normal::new(0.0, (2.0 / inputs as f64).sqrt()).expect("positive std");
            DenseLayer {
                inputs,
                outputs,
                weights: (0..inputs * outputs).map(|_| dist.sample(&mut rng)).collect(),
                bias: vec![0.0; outputs],
            }
        })
        .collect();
    Ok(MlpParams { layers, leaky_slope })
}

impl MlpParams {
    /// One linear identity layer: embeddings are the normalized raw features,
    /// so evaluating it gives the raw-feature nearest-centroid baseline.
    pub fn identity(dim: usize) -> Self {
        let mut weights = vec![0.0; dim * dim];
        (0..dim).for_each(|i| weights[i * dim + i] = 1.0);
        Self {
            layers: vec![DenseLayer { inputs: dim, outputs: dim, weights, bias: vec![0.0; dim] }],
            leaky_slope: 0.01,
        }
    }

    /// `[input, hidden..., output]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].inputs];
        dims.extend(self.layers.iter().map(|l| l.outputs));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Layer by layer, weights (row-major) then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Copy with parameters taken from `flat` in [`Self::flatten`] order.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch { expected: self.num_params(), found: flat.len() });
        }
        let mut out = self.clone();
        out.params_mut().zip(flat).for_each(|(p, v)| *p = *v);
        Ok(out)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    fn activate(&self, z: f64) -> f64 {
        if z > 0.0 {
            z
        } else {
            self.leaky_slope * z
        }
    }

    fn activate_grad(&self, z: f64) -> f64 {
        if z > 0.0 {
            1.0
        } else {
            self.leaky_slope
        }
    }

    /// Embeds a batch. Fails if a sample has the wrong dimension or its final
    /// output has (near) zero norm.
    pub fn forward(&self, batch: &[Vec<f64>]) -> Result<(Vec<UnitVector>, ForwardCache)> {
        let last = self.layers.len() - 1;
        let mut embeddings = Vec::with_capacity(batch.len());
        let mut traces = Vec::with_capacity(batch.len());
        for x in batch {
            if x.len() != self.input_dim() {
                return Err(Error::DimensionMismatch { expected: self.input_dim(), found: x.len() });
            }
            let mut layer_inputs = Vec::with_capacity(self.layers.len());
            let mut pre_activations = Vec::with_capacity(self.layers.len());
            let mut h = x.clone();
            for (li, layer) in self.layers.iter().enumerate() {
                let z = layer.forward(&h);
                let next = if li == last {
                    z.clone()
                } else {
                    z.iter().map(|&v| self.activate(v)).collect()
                };
                layer_inputs.push(std::mem::replace(&mut h, next));
                pre_activations.push(z);
            }
            let unit = l2_normalize(&h).map_err(|e| match e {
                Error::Degenerate { norm, threshold, .. } => Error::Degenerate {
                    what: "embedding before normalization".into(),
                    norm,
                    threshold,
                },
                other => other,
            })?;
            let norm = crate::numeric::norm(&h);
            embeddings.push(unit);
            traces.push(SampleTrace { layer_inputs, pre_activations, norm });
        }
        Ok((embeddings, ForwardCache { traces }))
    }

    /// Embeddings only.
    pub fn embed(&self, batch: &[Vec<f64>]) -> Result<Vec<UnitVector>> {
        self.forward(batch).map(|(e, _)| e)
    }

    /// Accumulates `∂L/∂θ` given `∂L/∂u` for each normalized embedding `u` of
    /// the batch that produced `cache`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        embeddings: &[UnitVector],
        d_embeddings: &[Vec<f64>],
    ) -> Result<ParamGrads> {
        if cache.traces.len() != d_embeddings.len() || embeddings.len() != d_embeddings.len() {
            return Err(Error::Shape(format!(
                "{} cached samples, {} embeddings, {} embedding gradients",
                cache.traces.len(),
                embeddings.len(),
                d_embeddings.len()
            )));
        }
        let mut grads = ParamGrads::zeros_like(self);
        let last = self.layers.len() - 1;
        for ((trace, unit), d_u) in cache.traces.iter().zip(embeddings).zip(d_embeddings) {
            let mut delta = normalize_backward(unit.as_slice(), trace.norm, d_u);
            for li in (0..=last).rev() {
                let layer = &self.layers[li];
                let input = &trace.layer_inputs[li];
                let gw = &mut grads.weights[li];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    grads.bias[li][o] += d;
                    let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                    row.iter_mut().zip(input).for_each(|(g, x)| *g += d * x);
                }
                if li == 0 {
                    break;
                }
                let mut d_input = vec![0.0; layer.inputs];
                for (row, d) in layer.weights.chunks_exact(layer.inputs).zip(&delta) {
                    d_input.iter_mut().zip(row).for_each(|(a, w)| *a += w * d);
                }
                let below = &trace.pre_activations[li - 1];
                delta = d_input
                    .iter()
                    .zip(below)
                    .map(|(d, z)| d * self.activate_grad(*z))
                    .collect();
            }
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{dot, finite_diff_gradient, norm};
    use rand::Rng;

    #[test]
    fn init_structure_and_determinism() {
        let p = mlp_init(&[8, 8], 0.01, 3).unwrap();
        assert_eq!(p.layers.len(), 1);
        assert_eq!(p.layers[0].weights.len(), 64);
        assert!(p.layers[0].bias.iter().all(|b| *b == 0.0));
        assert_eq!(p, mlp_init(&[8, 8], 0.01, 3).unwrap());
        assert_ne!(p, mlp_init(&[8, 8], 0.01, 4).unwrap());
        assert!(mlp_init(&[8], 0.01, 0).is_err());
        assert!(mlp_init(&[8, 0, 4], 0.01, 0).is_err());
    }

    #[test]
    fn init_weight_scale() {
        for seed in 0..10 {
            let p = mlp_init(&[32, 64, 64, 32], 0.01, seed).unwrap();
            for l in &p.layers {
                let n = l.weights.len() as f64;
                let mean = l.weights.iter().sum::<f64>() / n;
                let std = (l.weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                let target = (2.0 / l.inputs as f64).sqrt();
                assert!((std - target).abs() < 0.2 * target, "std {std} vs {target}");
            }
        }
    }

    #[test]
    fn identity_network_normalizes() {
        let (emb, _) = MlpParams::identity(2).forward(&[vec![3.0, 4.0]]).unwrap();
        assert!((emb[0].as_slice()[0] - 0.6).abs() < 1e-15);
        assert!((emb[0].as_slice()[1] - 0.8).abs() < 1e-15);
        assert!(matches!(
            MlpParams::identity(2).forward(&[vec![0.0, 0.0]]),
            Err(Error::Degenerate { .. })
        ));
        assert!(matches!(
            MlpParams::identity(2).forward(&[vec![1.0, 0.0, 0.0]]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn unit_slope_is_affine() {
        let p = mlp_init(&[4, 6, 5, 3], 1.0, 9).unwrap();
        // Compose the layers into one affine map and compare.
        let x = vec![0.3, -1.2, 0.5, 2.0];
        let y = vec![-0.7, 0.1, 0.9, -0.4];
        let raw = |v: &[f64]| p.layers.iter().fold(v.to_vec(), |h, l| l.forward(&h));
        let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
        let (fx, fy, fm) = (raw(&x), raw(&y), raw(&mid));
        for i in 0..3 {
            assert!((fm[i] - 0.5 * (fx[i] + fy[i])).abs() < 1e-12);
        }
        let (emb, cache) = p.forward(std::slice::from_ref(&x)).unwrap();
        assert!((norm(&fx) - cache.traces[0].norm).abs() < 1e-12);
        assert!((dot(emb[0].as_slice(), &fx) - norm(&fx)).abs() < 1e-12);
    }

    #[test]
    fn random_batch_is_unit_norm() {
        let p = mlp_init(&[5, 16, 8], 0.01, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch: Vec<Vec<f64>> = (0..4).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let (emb, cache) = p.forward(&batch).unwrap();
        assert_eq!(cache.traces.len(), 4);
        assert!(emb.iter().all(|u| (norm(u.as_slice()) - 1.0).abs() < 1e-9));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let p = mlp_init(&[3, 5, 4], 0.1, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch: Vec<Vec<f64>> = (0..3).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let dirs: Vec<Vec<f64>> = (0..3).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let objective = |flat: &[f64]| {
            let q = p.with_flat(flat).unwrap();
            let emb = q.embed(&batch).unwrap();
            emb.iter().zip(&dirs).map(|(u, d)| dot(u.as_slice(), d)).sum::<f64>()
        };
        let (emb, cache) = p.forward(&batch).unwrap();
        let analytic = p.backward(&cache, &emb, &dirs).unwrap().flatten();
        let numeric = finite_diff_gradient(objective, &p.flatten(), 1e-6).unwrap();
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!((a - n).abs() < 1e-7 * (1.0 + a.abs()), "{a} vs {n}");
        }
    }

    #[test]
    fn flat_round_trip() {
        let p = mlp_init(&[3, 4, 2], 0.01, 5).unwrap();
        assert_eq!(p.with_flat(&p.flatten()).unwrap(), p);
        assert!(p.with_flat(&[1.0]).is_err());
    }
}

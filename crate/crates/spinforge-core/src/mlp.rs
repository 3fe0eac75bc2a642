//! The compiler network: a plain multilayer perceptron from trigonometric
//! gate features to per-slice phases, with explicit backpropagation and an
//! AdamW optimizer. No autodiff framework; the gradients here are chained by
//! hand against the adjoint module's phase gradients.
//!
//! GELU uses the exact erf form `x·Φ(x)` so activations can be checked
//! against the standard normal CDF. Dropout applies to hidden activations
//! only, with inverted scaling at train time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::GateSpec;
use crate::rng::RngStream;

/// Trigonometric features `(cos γ, sin γ, cos θ, sin θ, cos α, sin α)`.
pub fn encode_features(g: &GateSpec) -> [f64; 6] {
    [
        g.gamma.cos(),
        g.gamma.sin(),
        g.theta.cos(),
        g.theta.sin(),
        g.alpha.cos(),
        g.alpha.sin(),
    ]
}

/// Standard normal CDF.
#[inline]
fn phi(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// GELU in its exact erf form.
#[inline]
pub fn gelu(x: f64) -> f64 {
    x * phi(x)
}

/// Derivative of GELU: `Φ(x) + x·φ(x)`.
#[inline]
fn gelu_prime(x: f64) -> f64 {
    const INV_SQRT_TAU: f64 = 0.3989422804014327; // 1/√(2π)
    phi(x) + x * INV_SQRT_TAU * (-0.5 * x * x).exp()
}

/// Network parameters. `weights[l]` is row-major `(dims[l+1] × dims[l])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpParams {
    pub fn n_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::ShapeMismatch("need at least input and output layers".into()));
        }
        if self.weights.len() != self.n_layers() || self.biases.len() != self.n_layers() {
            return Err(Error::ShapeMismatch("layer count disagrees with layer_dims".into()));
        }
        for l in 0..self.n_layers() {
            let (fan_in, fan_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            if self.weights[l].len() != fan_in * fan_out || self.biases[l].len() != fan_out {
                return Err(Error::ShapeMismatch(format!("layer {l} has inconsistent shapes")));
            }
            if self.weights[l].iter().chain(&self.biases[l]).any(|x| !x.is_finite()) {
                return Err(Error::ShapeMismatch(format!("layer {l} has non-finite entries")));
            }
        }
        Ok(())
    }
}

/// Fan-in/fan-out scaled uniform initialization, deterministic per seed.
pub fn init_params(seed: u64, layer_dims: &[usize]) -> MlpParams {
    let rng = RngStream::new(seed).child(crate::rng::domain::INIT);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..layer_dims.len() - 1 {
        let (fan_in, fan_out) = (layer_dims[l], layer_dims[l + 1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let layer_rng = rng.child(l as u64);
        let w = (0..fan_in * fan_out)
            .map(|i| bound * (2.0 * layer_rng.uniform_at(i as u64) - 1.0))
            .collect();
        weights.push(w);
        biases.push(vec![0.0; fan_out]);
    }
    MlpParams { layer_dims: layer_dims.to_vec(), weights, biases }
}

/// Per-hidden-layer dropout masks with inverted scaling: entries are `0` or
/// `1/(1-p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub p: f64,
    pub masks: Vec<Vec<f64>>,
}

impl DropoutMask {
    /// Sample masks for every hidden layer of `layer_dims`, addressed by
    /// (layer, unit) under the given stream.
    pub fn sample(rng: RngStream, p: f64, layer_dims: &[usize]) -> Self {
        let keep_scale = 1.0 / (1.0 - p);
        let masks = layer_dims[1..layer_dims.len() - 1]
            .iter()
            .enumerate()
            .map(|(l, &width)| {
                let layer_rng = rng.child(l as u64);
                (0..width)
                    .map(|u| if layer_rng.uniform_at(u as u64) < p { 0.0 } else { keep_scale })
                    .collect()
            })
            .collect();
        Self { p, masks }
    }
}

/// Values recorded by the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Layer inputs: `activations[0]` is the network input, `activations[l]`
    /// the (post-dropout) input to layer `l`.
    activations: Vec<Vec<f64>>,
    /// Pre-activations of every hidden layer.
    pre_activations: Vec<Vec<f64>>,
    mask: Option<DropoutMask>,
}

fn affine(weights: &[f64], biases: &[f64], input: &[f64]) -> Vec<f64> {
    let fan_in = input.len();
    biases
        .iter()
        .enumerate()
        .map(|(o, &b)| {
            let row = &weights[o * fan_in..(o + 1) * fan_in];
            b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
        })
        .collect()
}

/// Forward pass. With a mask the network runs in training mode (dropout on);
/// without one, inference is deterministic. Output units are read directly
/// as radians.
pub fn mlp_forward(
    params: &MlpParams,
    x: &[f64],
    mask: Option<&DropoutMask>,
) -> Result<(Vec<f64>, ForwardCache)> {
    if x.len() != params.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "input has {} features, network expects {}",
            x.len(),
            params.input_dim()
        )));
    }
    let n_hidden = params.n_layers() - 1;
    if let Some(m) = mask {
        if m.masks.len() != n_hidden {
            return Err(Error::ShapeMismatch(format!(
                "mask covers {} hidden layers, network has {n_hidden}",
                m.masks.len()
            )));
        }
    }
    let mut activations = vec![x.to_vec()];
    let mut pre_activations = Vec::with_capacity(n_hidden);
    for l in 0..n_hidden {
        let z = affine(&params.weights[l], &params.biases[l], &activations[l]);
        let mut a: Vec<f64> = z.iter().map(|&v| gelu(v)).collect();
        if let Some(m) = mask {
            for (av, &mv) in a.iter_mut().zip(&m.masks[l]) {
                *av *= mv;
            }
        }
        pre_activations.push(z);
        activations.push(a);
    }
    let out = affine(
        &params.weights[n_hidden],
        &params.biases[n_hidden],
        &activations[n_hidden],
    );
    let cache = ForwardCache { activations, pre_activations, mask: mask.cloned() };
    Ok((out, cache))
}

/// Parameter gradients, same shapes as [`MlpParams`].
#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGradients {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            weights: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// `self += other`, entry-wise.
    pub fn accumulate(&mut self, other: &MlpGradients) {
        for (dst, src) in self.weights.iter_mut().zip(&other.weights) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
        for (dst, src) in self.biases.iter_mut().zip(&other.biases) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
}

/// Backpropagate `grad_out = ∂L/∂output` through the cached forward pass.
/// The dropout mask recorded in the cache is re-applied identically.
pub fn mlp_backward(
    params: &MlpParams,
    cache: &ForwardCache,
    grad_out: &[f64],
) -> Result<MlpGradients> {
    if grad_out.len() != params.output_dim() {
        return Err(Error::ShapeMismatch(format!(
            "grad_out has {} entries, network outputs {}",
            grad_out.len(),
            params.output_dim()
        )));
    }
    let n_layers = params.n_layers();
    let mut grads = MlpGradients::zeros_like(params);
    let mut delta = grad_out.to_vec();
    for l in (0..n_layers).rev() {
        let input = &cache.activations[l];
        let fan_in = input.len();
        // dW = delta ⊗ input, db = delta
        for (o, &d) in delta.iter().enumerate() {
            grads.biases[l][o] = d;
            let row = &mut grads.weights[l][o * fan_in..(o + 1) * fan_in];
            for (g, &x) in row.iter_mut().zip(input) {
                *g = d * x;
            }
        }
        if l == 0 {
            break;
        }
        // delta for the layer below: Wᵀ delta, then dropout and GELU'.
        let mut below = vec![0.0; fan_in];
        for (o, &d) in delta.iter().enumerate() {
            let row = &params.weights[l][o * fan_in..(o + 1) * fan_in];
            for (b, &w) in below.iter_mut().zip(row) {
                *b += w * d;
            }
        }
        let hidden = l - 1; // index into pre_activations / masks
        if let Some(mask) = &cache.mask {
            for (b, &m) in below.iter_mut().zip(&mask.masks[hidden]) {
                *b *= m;
            }
        }
        for (b, &z) in below.iter_mut().zip(&cache.pre_activations[hidden]) {
            *b *= gelu_prime(z);
        }
        delta = below;
    }
    Ok(grads)
}

/// AdamW optimizer state: first/second moments with bias correction and
/// decoupled weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamWState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub m_weights: Vec<Vec<f64>>,
    pub v_weights: Vec<Vec<f64>>,
    pub m_biases: Vec<Vec<f64>>,
    pub v_biases: Vec<Vec<f64>>,
}

impl AdamWState {
    pub fn new(params: &MlpParams, lr: f64, weight_decay: f64) -> Self {
        Self {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m_weights: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            v_weights: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            m_biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            v_biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn adamw_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    state_step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
) {
    let bc1 = 1.0 - beta1.powi(state_step as i32);
    let bc2 = 1.0 - beta2.powi(state_step as i32);
    for i in 0..params.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * params[i]);
    }
}

/// One AdamW step: `p ← p - lr·(m̂/(√v̂+ε) + wd·p)` with decoupled decay.
pub fn adamw_step(
    params: &mut MlpParams,
    grads: &MlpGradients,
    state: &mut AdamWState,
) -> Result<()> {
    if grads.weights.len() != params.weights.len() {
        return Err(Error::ShapeMismatch("gradient layer count mismatch".into()));
    }
    for l in 0..params.weights.len() {
        if grads.weights[l].len() != params.weights[l].len()
            || grads.biases[l].len() != params.biases[l].len()
        {
            return Err(Error::ShapeMismatch(format!("gradient shape mismatch at layer {l}")));
        }
    }
    state.step += 1;
    for l in 0..params.weights.len() {
        adamw_update(
            &mut params.weights[l],
            &grads.weights[l],
            &mut state.m_weights[l],
            &mut state.v_weights[l],
            state.step,
            state.lr,
            state.beta1,
            state.beta2,
            state.eps,
            state.weight_decay,
        );
        adamw_update(
            &mut params.biases[l],
            &grads.biases[l],
            &mut state.m_biases[l],
            &mut state.v_biases[l],
            state.step,
            state.lr,
            state.beta1,
            state.beta2,
            state.eps,
            state.weight_decay,
        );
    }
    Ok(())
}

/// On-disk model format: parameters plus optional optimizer state.
/// JSON round-trips are bit-exact at double precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub optimizer_state: Option<AdamWState>,
    pub seed: u64,
}

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

impl Checkpoint {
    pub fn new(params: MlpParams, optimizer_state: Option<AdamWState>, seed: u64) -> Self {
        Self {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            layer_dims: params.layer_dims,
            weights: params.weights,
            biases: params.biases,
            optimizer_state,
            seed,
        }
    }

    pub fn params(&self) -> MlpParams {
        MlpParams {
            layer_dims: self.layer_dims.clone(),
            weights: self.weights.clone(),
            biases: self.biases.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(json)
            .map_err(|e| Error::ConfigError(format!("malformed checkpoint: {e}")))?;
        ckpt.params().validate()?;
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{self, TestRng};

    #[test]
    fn features_at_zero() {
        let x = encode_features(&GateSpec::new(0.0, 0.0, 0.0));
        assert_eq!(x, [1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn features_at_right_angles() {
        let x = encode_features(&GateSpec::new(
            std::f64::consts::FRAC_PI_2,
            std::f64::consts::FRAC_PI_2,
            std::f64::consts::FRAC_PI_2,
        ));
        for (i, expected) in [0.0, 1.0, 0.0, 1.0, 0.0, 1.0].iter().enumerate() {
            assert!((x[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn features_demo_gate() {
        let x = encode_features(&GateSpec::from_degrees(90.0, 90.0, 10.0));
        let ten = 10.0_f64.to_radians();
        assert!((x[4] - ten.cos()).abs() < 1e-15);
        assert!((x[5] - ten.sin()).abs() < 1e-15);
        assert!(x[0].abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gelu_against_normal_cdf_series() {
        assert_eq!(gelu(0.0), 0.0);
        // Φ(1) from the erf Maclaurin series oracle
        let phi1 = 0.5 * (1.0 + testkit::erf_series(1.0 / std::f64::consts::SQRT_2));
        assert!((gelu(1.0) - phi1).abs() < 1e-12);
        assert!((gelu(1.0) - 0.8413447460685429).abs() < 1e-12);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let params = MlpParams {
            layer_dims: vec![6, 4, 3],
            weights: vec![vec![0.0; 24], vec![0.0; 12]],
            biases: vec![vec![0.0; 4], vec![0.0; 3]],
        };
        let (out, _) = mlp_forward(&params, &[1.0; 6], None).unwrap();
        assert_eq!(out, vec![0.0; 3]);
    }

    #[test]
    fn single_hidden_layer_hand_computation() {
        // 2 -> 2 -> 1 with hand-set weights.
        let params = MlpParams {
            layer_dims: vec![2, 2, 1],
            weights: vec![vec![1.0, -1.0, 0.5, 2.0], vec![3.0, -2.0]],
            biases: vec![vec![0.1, -0.2], vec![0.05]],
        };
        let x = [0.7, 0.3];
        let z0 = 1.0 * 0.7 - 1.0 * 0.3 + 0.1;
        let z1 = 0.5 * 0.7 + 2.0 * 0.3 - 0.2;
        let expected = 3.0 * gelu(z0) - 2.0 * gelu(z1) + 0.05;
        let (out, _) = mlp_forward(&params, &x, None).unwrap();
        assert!((out[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn forward_rejects_bad_input_len() {
        let params = init_params(1, &[6, 8, 4]);
        assert!(matches!(
            mlp_forward(&params, &[0.0; 5], None),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn backward_zero_grad_out() {
        let params = init_params(2, &[6, 8, 4]);
        let (_, cache) = mlp_forward(&params, &[0.3; 6], None).unwrap();
        let grads = mlp_backward(&params, &cache, &[0.0; 4]).unwrap();
        assert!(grads.weights.iter().flatten().all(|&g| g == 0.0));
        assert!(grads.biases.iter().flatten().all(|&g| g == 0.0));
    }

    #[test]
    fn linear_net_gradient_is_input() {
        // One affine layer: d(out)/dW[o,i] = x[i] when grad_out[o] = 1.
        let params = MlpParams {
            layer_dims: vec![3, 1],
            weights: vec![vec![0.2, -0.4, 0.6]],
            biases: vec![vec![0.0]],
        };
        let x = [1.5, -2.0, 0.25];
        let (_, cache) = mlp_forward(&params, &x, None).unwrap();
        let grads = mlp_backward(&params, &cache, &[1.0]).unwrap();
        assert_eq!(grads.weights[0], x.to_vec());
        assert_eq!(grads.biases[0], vec![1.0]);
    }

    /// Probe loss: dot(out, probe_weights); its parameter gradient is checked
    /// by central finite differences.
    #[test]
    fn backward_matches_finite_difference() {
        let layer_dims = vec![6, 10, 10, 7];
        let params = init_params(5, &layer_dims);
        let mask = DropoutMask::sample(RngStream::new(8).child(99), 0.5, &layer_dims);
        let x: Vec<f64> = (0..6).map(|i| 0.3 * (i as f64) - 0.8).collect();
        let probe: Vec<f64> = (0..7).map(|i| ((i * 13 + 5) % 7) as f64 / 3.0 - 1.0).collect();

        let loss = |p: &MlpParams| -> f64 {
            let (out, _) = mlp_forward(p, &x, Some(&mask)).unwrap();
            out.iter().zip(&probe).map(|(o, w)| o * w).sum()
        };

        let (_, cache) = mlp_forward(&params, &x, Some(&mask)).unwrap();
        let grads = mlp_backward(&params, &cache, &probe).unwrap();

        let mut rng = TestRng::new(17);
        let delta = 1e-6;
        for l in 0..params.n_layers() {
            for _ in 0..12 {
                let i = (rng.next_u64() as usize) % params.weights[l].len();
                let mut plus = params.clone();
                plus.weights[l][i] += delta;
                let mut minus = params.clone();
                minus.weights[l][i] -= delta;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * delta);
                let analytic = grads.weights[l][i];
                let denom = numeric.abs().max(1e-5);
                assert!(
                    (analytic - numeric).abs() / denom < 1e-5,
                    "layer {l} weight {i}: analytic {analytic}, numeric {numeric}"
                );
            }
            for _ in 0..4 {
                let i = (rng.next_u64() as usize) % params.biases[l].len();
                let mut plus = params.clone();
                plus.biases[l][i] += delta;
                let mut minus = params.clone();
                minus.biases[l][i] -= delta;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * delta);
                let analytic = grads.biases[l][i];
                let denom = numeric.abs().max(1e-5);
                assert!(
                    (analytic - numeric).abs() / denom < 1e-5,
                    "layer {l} bias {i}: analytic {analytic}, numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn inference_is_deterministic() {
        let params = init_params(9, &[6, 16, 16, 5]);
        let x = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let (a, _) = mlp_forward(&params, &x, None).unwrap();
        let (b, _) = mlp_forward(&params, &x, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_mask_entries_and_expectation() {
        // Single hidden layer: the readout is linear in the masked
        // activations, so E[output over masks] equals the no-dropout output.
        let layer_dims = vec![6, 64, 4];
        let p = 0.5;
        let scale = 1.0 / (1.0 - p);
        let root = RngStream::new(3).child(7);
        let mask = DropoutMask::sample(root.child(0), p, &layer_dims);
        for layer in &mask.masks {
            assert!(layer.iter().all(|&m| m == 0.0 || m == scale));
        }
        let params = init_params(21, &layer_dims);
        let x = [0.4, -0.2, 0.9, 0.1, -0.5, 0.3];
        let (clean, _) = mlp_forward(&params, &x, None).unwrap();
        let n = 10_000usize;
        let mut sum = vec![0.0; 4];
        let mut sumsq = vec![0.0; 4];
        for k in 0..n {
            let m = DropoutMask::sample(root.child(k as u64 + 1), p, &layer_dims);
            let (out, _) = mlp_forward(&params, &x, Some(&m)).unwrap();
            for i in 0..4 {
                sum[i] += out[i];
                sumsq[i] += out[i] * out[i];
            }
        }
        for i in 0..4 {
            let mean = sum[i] / n as f64;
            let var = sumsq[i] / n as f64 - mean * mean;
            let stderr = (var / n as f64).sqrt();
            assert!(
                (mean - clean[i]).abs() < 3.0 * stderr + 1e-9,
                "output {i}: mean {mean}, clean {}, stderr {stderr}",
                clean[i]
            );
        }
    }

    #[test]
    fn adamw_no_grads_no_decay_is_identity() {
        let mut params = init_params(4, &[3, 4, 2]);
        let before = params.clone();
        let grads = MlpGradients::zeros_like(&params);
        let mut state = AdamWState::new(&params, 1e-3, 0.0);
        adamw_step(&mut params, &grads, &mut state).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn adamw_pure_decay_scales_params() {
        let mut params = init_params(4, &[3, 4, 2]);
        let before = params.clone();
        let grads = MlpGradients::zeros_like(&params);
        let mut state = AdamWState::new(&params, 1e-3, 1e-3);
        adamw_step(&mut params, &grads, &mut state).unwrap();
        for l in 0..params.n_layers() {
            for (after, b) in params.weights[l].iter().zip(&before.weights[l]) {
                assert!((after - b * (1.0 - 1e-6)).abs() <= 1e-15 * b.abs());
            }
        }
    }

    #[test]
    fn adamw_two_step_hand_trace() {
        // Single scalar parameter, g1 = 0.5, g2 = -0.25, lr = 0.1, no decay.
        let mut params = MlpParams {
            layer_dims: vec![1, 1],
            weights: vec![vec![1.0]],
            biases: vec![vec![0.0]],
        };
        let mut state = AdamWState::new(&params, 0.1, 0.0);

        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let mut m = 0.0_f64;
        let mut v = 0.0_f64;
        let mut w = 1.0_f64;
        for (k, g) in [(1, 0.5_f64), (2, -0.25_f64)] {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(k));
            let vh = v / (1.0 - b2.powi(k));
            w -= 0.1 * (mh / (vh.sqrt() + eps));
        }

        for g in [0.5, -0.25] {
            let grads = MlpGradients { weights: vec![vec![g]], biases: vec![vec![0.0]] };
            adamw_step(&mut params, &grads, &mut state).unwrap();
        }
        assert!((params.weights[0][0] - w).abs() < 1e-15, "{} vs {w}", params.weights[0][0]);
    }

    #[test]
    fn adamw_rejects_shape_mismatch() {
        let mut params = init_params(4, &[3, 4, 2]);
        let other = init_params(4, &[3, 5, 2]);
        let grads = MlpGradients::zeros_like(&other);
        let mut state = AdamWState::new(&params, 1e-3, 0.0);
        assert!(matches!(
            adamw_step(&mut params, &grads, &mut state),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a = init_params(7, &[6, 32, 9]);
        let b = init_params(7, &[6, 32, 9]);
        let c = init_params(8, &[6, 32, 9]);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_variance_matches_fan_scaling() {
        // Var(U(-a, a)) = a²/3 = 2/(fan_in + fan_out).
        let dims = [100, 100];
        let params = init_params(11, &[dims[0], dims[1]]);
        let w = &params.weights[0];
        let n = w.len() as f64;
        let mean: f64 = w.iter().sum::<f64>() / n;
        let var: f64 = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let target = 2.0 / (dims[0] + dims[1]) as f64;
        assert!((var - target).abs() / target < 0.2, "var {var}, target {target}");
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let params = init_params(13, &[6, 12, 5]);
        let state = AdamWState::new(&params, 5e-4, 1e-3);
        let ckpt = Checkpoint::new(params, Some(state), 13);
        let json = ckpt.to_json();
        let back = Checkpoint::from_json(&json).unwrap();
        assert_eq!(ckpt, back);
        assert_eq!(json, back.to_json());
    }
}

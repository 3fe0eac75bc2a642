//! Scenario-loss aggregation and control regularizers.
//!
//! The risk aggregator is right-tail unbalanced CVaR: the `(1-α)` quantile
//! `t` of the pooled batch losses (treated as a constant under
//! differentiation) plus the scaled mean excess above it. Mean and worst-case
//! aggregators are kept for comparison. The regularizers are the mean
//! absolute first difference of the phase sequence and the power of its
//! high-frequency spectrum.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};

/// Which aggregator pools the scenario losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskKind {
    Mean,
    Worst,
    RuCvar,
}

/// Risk objective configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskConfig {
    pub kind: RiskKind,
    /// Tail level for RU-CVaR, in `(0, 1]`.
    pub alpha: f64,
    pub lambda_tv: f64,
    pub lambda_spec: f64,
    /// Fraction of the Nyquist band below which spectral content is free.
    pub spec_cutoff_fraction: f64,
}

impl RiskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::ConfigError(format!("alpha must be in (0,1], got {}", self.alpha)));
        }
        if self.lambda_tv < 0.0 || self.lambda_spec < 0.0 {
            return Err(Error::ConfigError("regularizer weights must be >= 0".into()));
        }
        if !(self.spec_cutoff_fraction > 0.0 && self.spec_cutoff_fraction < 1.0) {
            return Err(Error::ConfigError("spec_cutoff_fraction must be in (0,1)".into()));
        }
        Ok(())
    }
}

/// A `B × S` grid of scenario losses, stored flattened with scenario index
/// fastest: entry `(b, s)` lives at `b * s_count + s`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBatch {
    losses: Vec<f64>,
    b_count: usize,
    s_count: usize,
}

impl LossBatch {
    pub fn new(b_count: usize, s_count: usize, losses: Vec<f64>) -> Result<Self> {
        if losses.len() != b_count * s_count || losses.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "expected {}x{} losses, got {}",
                b_count,
                s_count,
                losses.len()
            )));
        }
        if losses.iter().any(|l| !l.is_finite()) {
            return Err(Error::ShapeMismatch("losses must be finite".into()));
        }
        Ok(Self { losses, b_count, s_count })
    }

    pub fn flat(&self) -> &[f64] {
        &self.losses
    }

    pub fn b_count(&self) -> usize {
        self.b_count
    }

    pub fn s_count(&self) -> usize {
        self.s_count
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }
}

/// Quantile by linear interpolation between order statistics: position
/// `q·(n-1)` in the sorted values, so `q = 0` is the minimum and `q = 1` the
/// maximum.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = q.clamp(0.0, 1.0);
    let position = q * (sorted.len() - 1) as f64;
    let lo = position.floor() as usize;
    let hi = position.ceil() as usize;
    if lo == hi {
        return Ok(sorted[lo]);
    }
    let frac = position - lo as f64;
    Ok(sorted[lo] * (1.0 - frac) + sorted[hi] * frac)
}

/// RU-CVaR evaluation: the risk value, the strict-exceedance tail mask, and
/// the threshold used (for logging).
#[derive(Debug, Clone)]
pub struct RuCvar {
    pub rho: f64,
    /// `tail_mask[b·S + s] = (ℓ > t)`.
    pub tail_mask: Vec<bool>,
    pub t: f64,
}

/// `ρ = t + (1/α)·mean(max(0, ℓ - t))` with `t` the `(1-α)` quantile.
pub fn rucvar(batch: &LossBatch, alpha: f64) -> Result<RuCvar> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::ConfigError(format!("alpha must be in (0,1], got {alpha}")));
    }
    let t = quantile(batch.flat(), 1.0 - alpha)?;
    let n = batch.len() as f64;
    let excess: f64 = batch.flat().iter().map(|&l| (l - t).max(0.0)).sum();
    let rho = t + excess / (alpha * n);
    let tail_mask = batch.flat().iter().map(|&l| l > t).collect();
    Ok(RuCvar { rho, tail_mask, t })
}

/// Gradient of RU-CVaR with respect to each loss under a stop-gradient on
/// `t`: `1/(α·B·S)` on strict exceedances, zero elsewhere.
pub fn rucvar_loss_gradient(batch: &LossBatch, alpha: f64) -> Result<Vec<f64>> {
    let eval = rucvar(batch, alpha)?;
    let weight = 1.0 / (alpha * batch.len() as f64);
    Ok(eval.tail_mask.iter().map(|&in_tail| if in_tail { weight } else { 0.0 }).collect())
}

/// Dispatch on the configured aggregator.
pub fn aggregate(batch: &LossBatch, cfg: &RiskConfig) -> Result<f64> {
    match cfg.kind {
        RiskKind::Mean => Ok(batch.flat().iter().sum::<f64>() / batch.len() as f64),
        RiskKind::Worst => Ok(batch.flat().iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
        RiskKind::RuCvar => Ok(rucvar(batch, cfg.alpha)?.rho),
    }
}

/// Mean absolute first difference `(1/(T-1))·Σ|φ_{t+1} - φ_t|`.
pub fn tv_penalty(phases: &[f64]) -> Result<f64> {
    if phases.len() < 2 {
        return Err(Error::TooShort { min: 2, got: phases.len() });
    }
    let sum: f64 = phases.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Ok(sum / (phases.len() - 1) as f64)
}

/// Subgradient of [`tv_penalty`], with `sign(0) = 0` at ties.
pub fn tv_gradient(phases: &[f64]) -> Result<Vec<f64>> {
    let t = phases.len();
    if t < 2 {
        return Err(Error::TooShort { min: 2, got: t });
    }
    let norm = 1.0 / (t - 1) as f64;
    let sign = |x: f64| {
        if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    let mut grad = vec![0.0; t];
    for k in 0..t {
        let mut g = 0.0;
        if k > 0 {
            g += sign(phases[k] - phases[k - 1]);
        }
        if k + 1 < t {
            g -= sign(phases[k + 1] - phases[k]);
        }
        grad[k] = norm * g;
    }
    Ok(grad)
}

// Cached FFT plans keyed by (length, direction); plan construction is far
// more expensive than an 8x8-scale transform.
fn fft_plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let cache = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (len, direction == FftDirection::Forward);
    let mut guard = cache.lock().unwrap();
    guard
        .entry(key)
        .or_insert_with(|| FftPlanner::new().plan_fft(len, direction))
        .clone()
}

fn spectrum(phases: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> =
        phases.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft_plan(phases.len(), FftDirection::Forward).process(&mut buf);
    buf
}

/// Indices and multiplicities of the penalized bins: every bin strictly above
/// `cutoff·(T/2)` up to the Nyquist bin, conjugate pairs counted once with
/// multiplicity 2 and the Nyquist bin (even T) with multiplicity 1.
fn high_freq_bins(t: usize, cutoff_fraction: f64) -> impl Iterator<Item = (usize, f64)> {
    let half = t / 2;
    let threshold = cutoff_fraction * t as f64 / 2.0;
    (1..=half).filter_map(move |k| {
        if (k as f64) <= threshold {
            return None;
        }
        let mult = if t % 2 == 0 && k == half { 1.0 } else { 2.0 };
        Some((k, mult))
    })
}

/// High-frequency power of the phase sequence: `Σ m_k · |X_k / T|²` over the
/// bins above the cutoff, where `X` is the unnormalized DFT. A constant
/// sequence scores 0; the fastest alternation `(+1,-1,...)` at cutoff 0.5
/// scores exactly 1.
pub fn spectral_penalty(phases: &[f64], cutoff_fraction: f64) -> Result<f64> {
    let t = phases.len();
    if t < 2 {
        return Err(Error::TooShort { min: 2, got: t });
    }
    let spec = spectrum(phases);
    let norm = 1.0 / (t * t) as f64;
    Ok(high_freq_bins(t, cutoff_fraction)
        .map(|(k, mult)| mult * spec[k].norm_sqr() * norm)
        .sum())
}

/// Analytic gradient of [`spectral_penalty`] from the DFT quadratic form:
/// `∂P/∂φ_s = Σ_k (2 m_k / T²)·Re(conj(X_k)·e^{-2πiks/T})`, evaluated with
/// one forward and one inverse transform.
pub fn spectral_gradient(phases: &[f64], cutoff_fraction: f64) -> Result<Vec<f64>> {
    let t = phases.len();
    if t < 2 {
        return Err(Error::TooShort { min: 2, got: t });
    }
    let spec = spectrum(phases);
    let mut weighted = vec![Complex64::new(0.0, 0.0); t];
    for (k, mult) in high_freq_bins(t, cutoff_fraction) {
        weighted[k] = mult * spec[k];
    }
    // Σ_k m_k·conj(X_k)·e^{-2πiks/T} is the conjugate of the unnormalized
    // inverse transform of the weighted bins; only its real part survives.
    fft_plan(t, FftDirection::Inverse).process(&mut weighted);
    let norm = 2.0 / (t * t) as f64;
    Ok(weighted.iter().map(|c| norm * c.re).collect())
}

/// Full training objective: pooled risk plus `λ_TV`/`λ_spec` times the mean
/// regularizer value over the batch examples.
pub fn objective(
    batch: &LossBatch,
    phases_per_example: &[Vec<f64>],
    cfg: &RiskConfig,
) -> Result<f64> {
    let risk = aggregate(batch, cfg)?;
    if phases_per_example.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = phases_per_example.len() as f64;
    let mut tv = 0.0;
    let mut spec = 0.0;
    if cfg.lambda_tv != 0.0 || cfg.lambda_spec != 0.0 {
        for phases in phases_per_example {
            tv += tv_penalty(phases)?;
            spec += spectral_penalty(phases, cfg.spec_cutoff_fraction)?;
        }
    }
    Ok(risk + cfg.lambda_tv * tv / n + cfg.lambda_spec * spec / n)
}

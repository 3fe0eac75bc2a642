//! JSON run-configuration schema and its translation into typed training
//! configurations.
//!
//! Angles in config files are degrees (human-facing); everything internal is
//! radians. Frequencies are kHz and durations ms throughout, so their
//! products are dimensionless phases.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::physics::{CouplingModel, SystemParams};
use crate::risk::{RiskConfig, RiskKind};
use crate::uncertainty::NoiseConfig;

/// Which training stage a run belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Nominal,
    Robust,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Nominal => "nominal",
            Stage::Robust => "robust",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nominal" => Ok(Stage::Nominal),
            "robust" => Ok(Stage::Robust),
            other => Err(Error::ConfigError(format!("unknown stage '{other}'"))),
        }
    }
}

fn default_n_qubits() -> usize { 3 }
fn default_v_khz() -> Vec<f64> { vec![-0.921, 0.04075, 0.7] }
fn default_j_khz() -> BTreeMap<String, f64> {
    BTreeMap::from([
        ("1-2".to_string(), -0.064),
        ("1-3".to_string(), 0.0244),
        ("2-3".to_string(), 0.0341),
    ])
}
fn default_coupling() -> String { "heisenberg".to_string() }
fn default_amplitude() -> f64 { 1.0 }
fn default_dt_ms() -> f64 { 0.01 }
fn default_t_slices() -> usize { 300 }

/// Register parameters and pulse discretization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    #[serde(default = "default_n_qubits")]
    pub n_qubits: usize,
    #[serde(default = "default_v_khz")]
    pub v_khz: Vec<f64>,
    /// Couplings keyed by "i-j" pairs, 1-based.
    #[serde(default = "default_j_khz")]
    pub j_khz: BTreeMap<String, f64>,
    /// "heisenberg" or "zz".
    #[serde(default = "default_coupling")]
    pub coupling_model: String,
    #[serde(default = "default_amplitude")]
    pub amplitude_khz: f64,
    #[serde(default = "default_dt_ms")]
    pub dt_ms: f64,
    #[serde(default = "default_t_slices")]
    pub t_slices: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_qubits: default_n_qubits(),
            v_khz: default_v_khz(),
            j_khz: default_j_khz(),
            coupling_model: default_coupling(),
            amplitude_khz: default_amplitude(),
            dt_ms: default_dt_ms(),
            t_slices: default_t_slices(),
        }
    }
}

fn parse_coupling(name: &str) -> Result<CouplingModel> {
    match name {
        "heisenberg" => Ok(CouplingModel::Heisenberg),
        "zz" => Ok(CouplingModel::Zz),
        other => Err(Error::ConfigError(format!("unknown coupling model '{other}'"))),
    }
}

fn parse_pair(key: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = key.split('-').collect();
    if parts.len() == 2 {
        if let (Ok(a), Ok(b)) = (parts[0].parse(), parts[1].parse()) {
            return Ok((a, b));
        }
    }
    Err(Error::ConfigError(format!("coupling key '{key}' is not of the form \"i-j\"")))
}

impl SystemConfig {
    pub fn system_params(&self, model: CouplingModel) -> Result<SystemParams> {
        let mut j = BTreeMap::new();
        for (key, &value) in &self.j_khz {
            j.insert(parse_pair(key)?, value);
        }
        SystemParams::new(self.n_qubits, self.v_khz.clone(), j, model)
    }

    pub fn coupling_model(&self) -> Result<CouplingModel> {
        parse_coupling(&self.coupling_model)
    }
}

fn default_hidden_width() -> usize { 256 }
fn default_hidden_layers() -> usize { 5 }
fn default_dropout() -> f64 { 0.5 }
fn default_lr_nominal() -> f64 { 5e-4 }
fn default_weight_decay() -> f64 { 1e-3 }
fn default_epochs_nominal() -> usize { 500 }
fn default_batch_nominal() -> usize { 512 }
fn default_n_gates() -> usize { 512 }
fn default_degmax_deg() -> f64 { 90.0 }
fn default_validation_gates() -> usize { 64 }

/// Network architecture and nominal-stage training knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    #[serde(default = "default_hidden_width")]
    pub hidden_width: usize,
    #[serde(default = "default_hidden_layers")]
    pub hidden_layers: usize,
    #[serde(default = "default_dropout")]
    pub dropout_p: f64,
    #[serde(default = "default_lr_nominal")]
    pub learning_rate: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_epochs_nominal")]
    pub epochs: usize,
    #[serde(default = "default_batch_nominal")]
    pub batch_size: usize,
    #[serde(default = "default_n_gates")]
    pub n_gates: usize,
    #[serde(default = "default_degmax_deg")]
    pub degmax_deg: f64,
    #[serde(default = "default_validation_gates")]
    pub validation_gates: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        serde_json::from_str("{}").unwrap()
    }
}

fn default_scenarios() -> usize { 32 }
fn default_epochs_robust() -> usize { 500 }
fn default_batch_robust() -> usize { 128 }
fn default_lr_robust() -> f64 { 1e-3 }
fn default_coupling_robust() -> String { "zz".to_string() }
fn default_risk_kind() -> String { "rucvar".to_string() }
fn default_alpha() -> f64 { 0.5 }
fn default_lambda_tv() -> f64 { 2e-4 }
fn default_lambda_spec() -> f64 { 1e-6 }
fn default_spec_cutoff() -> f64 { 0.2 }
fn default_eval_set_size() -> usize { 128 }
fn default_sweep_repeats() -> usize { 16 }

/// Risk-aware re-optimization knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustConfig {
    #[serde(default = "default_scenarios")]
    pub scenarios_per_example: usize,
    #[serde(default = "default_epochs_robust")]
    pub epochs: usize,
    #[serde(default = "default_batch_robust")]
    pub batch_size: usize,
    #[serde(default = "default_lr_robust")]
    pub learning_rate: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    /// Drift model for the robust stage ("zz" by default).
    #[serde(default = "default_coupling_robust")]
    pub coupling_model: String,
    /// "mean", "worst", or "rucvar".
    #[serde(default = "default_risk_kind")]
    pub risk_kind: String,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_lambda_tv")]
    pub lambda_tv: f64,
    #[serde(default = "default_lambda_spec")]
    pub lambda_spec: f64,
    #[serde(default = "default_spec_cutoff")]
    pub spec_cutoff_fraction: f64,
    /// Size of the random gate set used by sweep studies.
    #[serde(default = "default_eval_set_size")]
    pub eval_set_size: usize,
    /// Realizations per (gate, value) for jitter-std sweeps.
    #[serde(default = "default_sweep_repeats")]
    pub sweep_repeats: usize,
}

impl Default for RobustConfig {
    fn default() -> Self {
        serde_json::from_str("{}").unwrap()
    }
}

impl RobustConfig {
    pub fn risk_config(&self) -> Result<RiskConfig> {
        let kind = match self.risk_kind.as_str() {
            "mean" => RiskKind::Mean,
            "worst" => RiskKind::Worst,
            "rucvar" => RiskKind::RuCvar,
            other => return Err(Error::ConfigError(format!("unknown risk kind '{other}'"))),
        };
        let cfg = RiskConfig {
            kind,
            alpha: self.alpha,
            lambda_tv: self.lambda_tv,
            lambda_spec: self.lambda_spec,
            spec_cutoff_fraction: self.spec_cutoff_fraction,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn default_sigma_v() -> f64 { 0.002 }
fn default_sigma_j() -> f64 { 0.005 }
fn default_sigma_a_bias() -> f64 { 0.03 }
fn default_sigma_a_jit() -> f64 { 0.02 }
fn default_sigma_phi0_deg() -> f64 { 2.0 }
fn default_sigma_phi_jit_deg() -> f64 { 0.5 }
fn default_sigma_dt() -> f64 { 0.005 }
fn default_sigma_dt_jit() -> f64 { 0.002 }

/// The eight uncertainty-knob standard deviations. Phase sigmas are given in
/// degrees here and converted to radians internally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseFileConfig {
    #[serde(default = "default_sigma_v")]
    pub sigma_v: f64,
    #[serde(default = "default_sigma_j")]
    pub sigma_j: f64,
    #[serde(default = "default_sigma_a_bias")]
    pub sigma_a_bias: f64,
    #[serde(default = "default_sigma_a_jit")]
    pub sigma_a_jit: f64,
    #[serde(default = "default_sigma_phi0_deg")]
    pub sigma_phi0_deg: f64,
    #[serde(default = "default_sigma_phi_jit_deg")]
    pub sigma_phi_jit_deg: f64,
    #[serde(default = "default_sigma_dt")]
    pub sigma_dt: f64,
    #[serde(default = "default_sigma_dt_jit")]
    pub sigma_dt_jit: f64,
}

impl Default for NoiseFileConfig {
    fn default() -> Self {
        serde_json::from_str("{}").unwrap()
    }
}

impl NoiseFileConfig {
    pub fn noise_config(&self) -> Result<NoiseConfig> {
        let cfg = NoiseConfig {
            sigma_v: self.sigma_v,
            sigma_j: self.sigma_j,
            sigma_a_bias: self.sigma_a_bias,
            sigma_a_jit: self.sigma_a_jit,
            sigma_phi0: self.sigma_phi0_deg.to_radians(),
            sigma_phi_jit: self.sigma_phi_jit_deg.to_radians(),
            sigma_dt: self.sigma_dt,
            sigma_dt_jit: self.sigma_dt_jit,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Root of the run-configuration file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub robust: RobustConfig,
    #[serde(default)]
    pub noise: NoiseFileConfig,
}

/// Everything one training run needs, in internal units.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub stage: Stage,
    pub system: SystemParams,
    pub amplitude: f64,
    pub dt: f64,
    pub t_slices: usize,
    pub layer_dims: Vec<usize>,
    pub dropout_p: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub n_gates: usize,
    /// Upper edge of the sampled gate-parameter cube, radians.
    pub degmax: f64,
    pub seed: u64,
    pub scenarios_per_example: usize,
    pub risk: RiskConfig,
    pub noise: NoiseConfig,
    pub validation_gates: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs > 0 && (self.n_gates == 0 || self.batch_size == 0) {
            return Err(Error::ConfigError("gate and batch counts must be positive".into()));
        }
        if !(self.degmax > 0.0 && self.degmax <= std::f64::consts::PI) {
            return Err(Error::ConfigError("degmax must be in (0°, 180°]".into()));
        }
        if self.t_slices == 0 {
            return Err(Error::ConfigError("t_slices must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::ConfigError("dropout_p must be in [0, 1)".into()));
        }
        if self.layer_dims.first() != Some(&6) {
            return Err(Error::ConfigError("network input must have 6 features".into()));
        }
        if self.layer_dims.last() != Some(&self.t_slices) {
            return Err(Error::ConfigError(format!(
                "network output dimension {} disagrees with t_slices {}",
                self.layer_dims.last().unwrap(),
                self.t_slices
            )));
        }
        if self.stage == Stage::Robust && self.scenarios_per_example == 0 {
            return Err(Error::ConfigError("robust stage needs at least one scenario".into()));
        }
        self.risk.validate()?;
        self.noise.validate()?;
        Ok(())
    }
}

impl RunConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::ConfigError(format!("bad config: {e}")))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    /// Assemble the typed configuration for one stage. The nominal stage uses
    /// the system block's coupling model; the robust stage uses the robust
    /// block's (ZZ by default), its own optimizer knobs, and the noise block.
    pub fn train_config(&self, stage: Stage, seed: u64) -> Result<TrainConfig> {
        let model = match stage {
            Stage::Nominal => self.system.coupling_model()?,
            Stage::Robust => parse_coupling(&self.robust.coupling_model)?,
        };
        let system = self.system.system_params(model)?;
        let mut layer_dims = vec![6];
        layer_dims.extend(std::iter::repeat_n(
            self.network.hidden_width,
            self.network.hidden_layers,
        ));
        layer_dims.push(self.system.t_slices);
        let (learning_rate, weight_decay, epochs, batch_size) = match stage {
            Stage::Nominal => (
                self.network.learning_rate,
                self.network.weight_decay,
                self.network.epochs,
                self.network.batch_size,
            ),
            Stage::Robust => (
                self.robust.learning_rate,
                self.robust.weight_decay,
                self.robust.epochs,
                self.robust.batch_size,
            ),
        };
        let cfg = TrainConfig {
            stage,
            system,
            amplitude: self.system.amplitude_khz,
            dt: self.system.dt_ms,
            t_slices: self.system.t_slices,
            layer_dims,
            dropout_p: self.network.dropout_p,
            learning_rate,
            weight_decay,
            epochs,
            batch_size,
            n_gates: self.network.n_gates,
            degmax: self.network.degmax_deg.to_radians(),
            seed,
            scenarios_per_example: self.robust.scenarios_per_example,
            risk: self.robust.risk_config()?,
            noise: self.noise.noise_config()?,
            validation_gates: self.network.validation_gates,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Hex SHA-256 of arbitrary bytes; used to stamp reports with the exact
/// config and model they came from.
pub fn content_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

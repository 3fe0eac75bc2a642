//! End-to-end workflows: nominal training, risk-aware re-optimization, grid
//! evaluation, and sweep studies.
//!
//! Determinism contract: for a fixed master seed every result here is
//! bit-identical across runs and across worker counts. Parallel work is
//! collected in index order and reduced sequentially; all randomness is
//! addressed through counter-based paths keyed by (domain, epoch, example,
//! scenario, ...), never by execution order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjoint;
use crate::config::{Stage, TrainConfig};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::mlp::{
    adamw_step, encode_features, init_params, mlp_backward, mlp_forward, AdamWState, DropoutMask,
    ForwardCache, MlpGradients, MlpParams,
};
use crate::physics::{self, GateSpec, PulseSequence, SystemParams};
use crate::risk::{self, LossBatch, RiskConfig, RiskKind};
use crate::rng::{domain, RngStream};
use crate::uncertainty::{self, SweepChannel};

/// Gates with γ, θ, α independently uniform on `[0, degmax]` radians.
pub fn sample_gates(n: usize, degmax: f64, rng: RngStream) -> Vec<GateSpec> {
    (0..n)
        .map(|i| {
            let g = rng.child(i as u64);
            GateSpec::new(
                degmax * g.child(0).uniform_at(0),
                degmax * g.child(1).uniform_at(0),
                degmax * g.child(2).uniform_at(0),
            )
        })
        .collect()
}

/// One row of the per-epoch training curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainCurvePoint {
    pub epoch: usize,
    /// Mean physics loss (1 - fidelity) over the epoch's examples/scenarios.
    pub train_loss: f64,
    /// Full objective: pooled risk plus regularizers (equals `train_loss`
    /// for nominal training).
    pub objective: f64,
    /// Mean inference-mode fidelity on the held-out validation gates. Logged
    /// only; never fed back into training.
    pub val_fidelity: f64,
}

/// Result of one training run.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: MlpParams,
    pub opt_state: AdamWState,
    pub curve: Vec<TrainCurvePoint>,
    /// Best validation epoch and fidelity, if validation ran.
    pub best_val: Option<(usize, f64)>,
}

fn batch_ranges(n: usize, batch_size: usize) -> Vec<std::ops::Range<usize>> {
    (0..n).step_by(batch_size.max(1)).map(|start| start..(start + batch_size).min(n)).collect()
}

fn dropout_for(cfg: &TrainConfig, root: RngStream, epoch: usize, example: usize) -> Option<DropoutMask> {
    (cfg.dropout_p > 0.0).then(|| {
        DropoutMask::sample(
            root.child(domain::DROPOUT).child(epoch as u64).child(example as u64),
            cfg.dropout_p,
            &cfg.layer_dims,
        )
    })
}

/// Mean inference-mode fidelity of the model over a gate set.
fn mean_inference_fidelity(
    params: &MlpParams,
    gates: &[GateSpec],
    system: &SystemParams,
    amplitude: f64,
    dt: f64,
) -> Result<f64> {
    if gates.is_empty() {
        return Ok(f64::NAN);
    }
    let fids: Vec<f64> = gates
        .par_iter()
        .map(|g| compile_gate(params, g, system, amplitude, dt).map(|(_, f)| f))
        .collect::<Result<Vec<f64>>>()?;
    Ok(fids.iter().sum::<f64>() / fids.len() as f64)
}

struct Dataset {
    features: Vec<[f64; 6]>,
    targets: Vec<ComplexMatrix>,
    val_gates: Vec<GateSpec>,
}

fn build_dataset(cfg: &TrainConfig, root: RngStream) -> Dataset {
    let gates = sample_gates(cfg.n_gates, cfg.degmax, root.child(domain::GATES));
    let features = gates.iter().map(encode_features).collect();
    let targets = gates.iter().map(|g| physics::gate_target(g, cfg.system.n_qubits)).collect();
    let val_gates =
        sample_gates(cfg.validation_gates, cfg.degmax, root.child(domain::VALIDATION));
    Dataset { features, targets, val_gates }
}

/// Nominal-stage training: fidelity-only loss through the nominal propagator.
pub fn train_nominal(cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    if cfg.stage != Stage::Nominal {
        return Err(Error::ConfigError("train_nominal requires stage = nominal".into()));
    }
    let params = init_params(cfg.seed, &cfg.layer_dims);
    train_nominal_from(cfg, params)
}

fn train_nominal_from(cfg: &TrainConfig, mut params: MlpParams) -> Result<TrainOutput> {
    let mut opt = AdamWState::new(&params, cfg.learning_rate, cfg.weight_decay);
    let root = RngStream::new(cfg.seed);
    let data = build_dataset(cfg, root);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut best_val: Option<(usize, f64)> = None;

    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for batch in batch_ranges(cfg.n_gates, cfg.batch_size) {
            let evals: Vec<(f64, Vec<f64>, ForwardCache)> = batch
                .clone()
                .into_par_iter()
                .map(|ex| {
                    let mask = dropout_for(cfg, root, epoch, ex);
                    let (phases, cache) = mlp_forward(&params, &data.features[ex], mask.as_ref())?;
                    let pulse = PulseSequence::new(phases, cfg.amplitude, cfg.dt)?;
                    let (loss, grad) =
                        adjoint::loss_and_phase_gradient(&cfg.system, &pulse, &data.targets[ex])?;
                    Ok((loss.max(0.0), grad, cache))
                })
                .collect::<Result<_>>()?;

            let scale = 1.0 / batch.len() as f64;
            let mut grad_sum = MlpGradients::zeros_like(&params);
            for (loss, phase_grad, cache) in &evals {
                loss_sum += loss;
                loss_count += 1;
                let grad_out: Vec<f64> = phase_grad.iter().map(|g| g * scale).collect();
                grad_sum.accumulate(&mlp_backward(&params, cache, &grad_out)?);
            }
            adamw_step(&mut params, &grad_sum, &mut opt)?;
        }
        let train_loss = loss_sum / loss_count.max(1) as f64;
        let val_fidelity = mean_inference_fidelity(
            &params,
            &data.val_gates,
            &cfg.system,
            cfg.amplitude,
            cfg.dt,
        )?;
        if val_fidelity.is_finite() && best_val.is_none_or(|(_, best)| val_fidelity > best) {
            best_val = Some((epoch, val_fidelity));
        }
        curve.push(TrainCurvePoint { epoch, train_loss, objective: train_loss, val_fidelity });
    }
    Ok(TrainOutput { params, opt_state: opt, curve, best_val })
}

/// Per-scenario pooling weights for the robust gradient.
///
/// RU-CVaR uses the stop-gradient tail rule (strict exceedances get
/// `1/(α·B·S)`). At `α = 1` the risk value is identically the batch mean, so
/// the exact gradient is uniform; the strict-tail rule would silently drop
/// the minimum-loss scenario there.
fn scenario_weights(batch: &LossBatch, risk: &RiskConfig) -> Result<Vec<f64>> {
    match risk.kind {
        RiskKind::Mean => Ok(vec![1.0 / batch.len() as f64; batch.len()]),
        RiskKind::Worst => {
            let mut weights = vec![0.0; batch.len()];
            let mut argmax = 0;
            for (i, &l) in batch.flat().iter().enumerate() {
                if l > batch.flat()[argmax] {
                    argmax = i;
                }
            }
            weights[argmax] = 1.0;
            Ok(weights)
        }
        RiskKind::RuCvar => {
            if risk.alpha >= 1.0 {
                Ok(vec![1.0 / batch.len() as f64; batch.len()])
            } else {
                risk::rucvar_loss_gradient(batch, risk.alpha)
            }
        }
    }
}

/// Risk-aware re-optimization from a pretrained model. Each batch example is
/// paired with `S` sampled scenarios; the pooled `B·S` losses are aggregated
/// by the configured risk measure, scenario phase-gradients are combined with
/// the aggregator's weights, regularizer gradients are added per example, and
/// the result is backpropagated through the network.
pub fn train_robust(cfg: &TrainConfig, init: MlpParams) -> Result<TrainOutput> {
    cfg.validate()?;
    if cfg.stage != Stage::Robust {
        return Err(Error::ConfigError("train_robust requires stage = robust".into()));
    }
    init.validate()?;
    if init.layer_dims != cfg.layer_dims {
        return Err(Error::ConfigError(format!(
            "checkpoint layer dims {:?} disagree with config {:?}",
            init.layer_dims, cfg.layer_dims
        )));
    }
    let mut params = init;
    let mut opt = AdamWState::new(&params, cfg.learning_rate, cfg.weight_decay);
    let root = RngStream::new(cfg.seed);
    let data = build_dataset(cfg, root);
    let s_count = cfg.scenarios_per_example;
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut best_val: Option<(usize, f64)> = None;

    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        let mut objective_sum = 0.0;
        let mut batch_count = 0usize;
        for batch in batch_ranges(cfg.n_gates, cfg.batch_size) {
            let b_count = batch.len();
            // Phases for every example, dropout on.
            let forwards: Vec<(Vec<f64>, ForwardCache)> = batch
                .clone()
                .into_par_iter()
                .map(|ex| {
                    let mask = dropout_for(cfg, root, epoch, ex);
                    mlp_forward(&params, &data.features[ex], mask.as_ref())
                })
                .collect::<Result<_>>()?;

            let scenario_rng = |ex: usize, si: usize| {
                root.child(domain::SCENARIO)
                    .child(epoch as u64)
                    .child(ex as u64)
                    .child(si as u64)
            };

            // Scenario losses for the whole batch.
            let losses: Vec<f64> = (0..b_count * s_count)
                .into_par_iter()
                .map(|k| {
                    let (bi, si) = (k / s_count, k % s_count);
                    let ex = batch.start + bi;
                    let sc = uncertainty::sample_scenario(
                        &cfg.noise,
                        cfg.t_slices,
                        scenario_rng(ex, si),
                    );
                    let pulse =
                        PulseSequence::new(forwards[bi].0.clone(), cfg.amplitude, cfg.dt)?;
                    let u = uncertainty::propagate_scenario(&cfg.system, &pulse, &sc)?;
                    let f = physics::fidelity(&data.targets[ex], &u)?;
                    Ok((1.0 - f).max(0.0))
                })
                .collect::<Result<_>>()?;
            let batch_losses = LossBatch::new(b_count, s_count, losses)?;
            let weights = scenario_weights(&batch_losses, &cfg.risk)?;

            // Phase gradients only where the aggregator gives weight.
            let phase_grads: Vec<Option<Vec<f64>>> = (0..b_count * s_count)
                .into_par_iter()
                .map(|k| {
                    if weights[k] == 0.0 {
                        return Ok(None);
                    }
                    let (bi, si) = (k / s_count, k % s_count);
                    let ex = batch.start + bi;
                    let sc = uncertainty::sample_scenario(
                        &cfg.noise,
                        cfg.t_slices,
                        scenario_rng(ex, si),
                    );
                    let pulse =
                        PulseSequence::new(forwards[bi].0.clone(), cfg.amplitude, cfg.dt)?;
                    let (_, grad) = adjoint::loss_and_phase_gradient_scenario(
                        &cfg.system,
                        &pulse,
                        &data.targets[ex],
                        &sc,
                    )?;
                    Ok(Some(grad))
                })
                .collect::<Result<_>>()?;

            let inv_b = 1.0 / b_count as f64;
            let mut grad_sum = MlpGradients::zeros_like(&params);
            for bi in 0..b_count {
                let phases = &forwards[bi].0;
                let mut grad_out = vec![0.0; cfg.t_slices];
                for si in 0..s_count {
                    let k = bi * s_count + si;
                    if let Some(g) = &phase_grads[k] {
                        for (dst, src) in grad_out.iter_mut().zip(g) {
                            *dst += weights[k] * src;
                        }
                    }
                }
                if cfg.risk.lambda_tv != 0.0 {
                    let tv = risk::tv_gradient(phases)?;
                    for (dst, src) in grad_out.iter_mut().zip(&tv) {
                        *dst += cfg.risk.lambda_tv * inv_b * src;
                    }
                }
                if cfg.risk.lambda_spec != 0.0 {
                    let spec =
                        risk::spectral_gradient(phases, cfg.risk.spec_cutoff_fraction)?;
                    for (dst, src) in grad_out.iter_mut().zip(&spec) {
                        *dst += cfg.risk.lambda_spec * inv_b * src;
                    }
                }
                grad_sum.accumulate(&mlp_backward(&params, &forwards[bi].1, &grad_out)?);
            }
            adamw_step(&mut params, &grad_sum, &mut opt)?;

            loss_sum += batch_losses.flat().iter().sum::<f64>();
            loss_count += batch_losses.len();
            let phases_per_example: Vec<Vec<f64>> =
                forwards.iter().map(|(p, _)| p.clone()).collect();
            objective_sum += risk::objective(&batch_losses, &phases_per_example, &cfg.risk)?;
            batch_count += 1;
        }
        let val_fidelity = mean_inference_fidelity(
            &params,
            &data.val_gates,
            &cfg.system,
            cfg.amplitude,
            cfg.dt,
        )?;
        if val_fidelity.is_finite() && best_val.is_none_or(|(_, best)| val_fidelity > best) {
            best_val = Some((epoch, val_fidelity));
        }
        curve.push(TrainCurvePoint {
            epoch,
            train_loss: loss_sum / loss_count.max(1) as f64,
            objective: objective_sum / batch_count.max(1) as f64,
            val_fidelity,
        });
    }
    Ok(TrainOutput { params, opt_state: opt, curve, best_val })
}

/// Inference-mode compilation of one gate: the pulse and its nominal
/// fidelity through the given system.
pub fn compile_gate(
    params: &MlpParams,
    g: &GateSpec,
    system: &SystemParams,
    amplitude: f64,
    dt: f64,
) -> Result<(PulseSequence, f64)> {
    let (phases, _) = mlp_forward(params, &encode_features(g), None)?;
    let pulse = PulseSequence::new(phases, amplitude, dt)?;
    let u = physics::propagate(system, &pulse)?;
    let target = physics::gate_target(g, system.n_qubits);
    let fidelity = physics::fidelity(&target, &u)?;
    Ok((pulse, fidelity))
}

/// Mean/median/min/max of a fidelity list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(Summary {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        median: risk::quantile(values, 0.5)?,
        min: values.iter().cloned().fold(f64::INFINITY, f64::min),
        max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Provenance stamped onto every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub config_hash: String,
    pub model_hash: String,
    pub seed: Option<u64>,
    pub revision: String,
}

impl ReportMeta {
    pub fn new(config_hash: String, model_hash: String, seed: Option<u64>) -> Self {
        Self {
            config_hash,
            model_hash,
            seed,
            revision: concat!("spinforge-", env!("CARGO_PKG_VERSION")).to_string(),
        }
    }
}

/// Fidelity at one grid gate, angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatePoint {
    pub gamma_deg: f64,
    pub theta_deg: f64,
    pub alpha_deg: f64,
    pub fidelity: f64,
}

/// Dense-grid evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_gate: Vec<GatePoint>,
    pub summary: Summary,
    pub meta: ReportMeta,
}

impl EvalReport {
    /// Per-gate table: `gamma_deg,theta_deg,alpha_deg,fidelity`.
    pub fn per_gate_csv(&self) -> String {
        let mut out = String::from("gamma_deg,theta_deg,alpha_deg,fidelity\n");
        for p in &self.per_gate {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.gamma_deg, p.theta_deg, p.alpha_deg, p.fidelity
            ));
        }
        out
    }

    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct SummaryFile<'a> {
            n_gates: usize,
            summary: &'a Summary,
            meta: &'a ReportMeta,
        }
        serde_json::to_string_pretty(&SummaryFile {
            n_gates: self.per_gate.len(),
            summary: &self.summary,
            meta: &self.meta,
        })
        .expect("report serialization cannot fail")
    }
}

/// Evaluate the model at every point of the inclusive `mesh_deg` grid over
/// `[0, degmax_deg]³`.
pub fn eval_grid(
    params: &MlpParams,
    system: &SystemParams,
    amplitude: f64,
    dt: f64,
    mesh_deg: f64,
    degmax_deg: f64,
    meta: ReportMeta,
) -> Result<EvalReport> {
    if !(mesh_deg > 0.0 && degmax_deg > 0.0) {
        return Err(Error::ConfigError("mesh and degmax must be positive".into()));
    }
    let steps = degmax_deg / mesh_deg;
    if (steps - steps.round()).abs() > 1e-9 {
        return Err(Error::ConfigError(format!(
            "mesh {mesh_deg}° does not divide degmax {degmax_deg}°"
        )));
    }
    let per_axis = steps.round() as usize + 1;
    let angles: Vec<f64> = (0..per_axis).map(|i| i as f64 * mesh_deg).collect();
    let mut grid = Vec::with_capacity(per_axis.pow(3));
    for &gamma in &angles {
        for &theta in &angles {
            for &alpha in &angles {
                grid.push((gamma, theta, alpha));
            }
        }
    }
    let per_gate: Vec<GatePoint> = grid
        .par_iter()
        .map(|&(gamma, theta, alpha)| {
            let g = GateSpec::from_degrees(gamma, theta, alpha);
            let (_, fidelity) = compile_gate(params, &g, system, amplitude, dt)?;
            Ok(GatePoint { gamma_deg: gamma, theta_deg: theta, alpha_deg: alpha, fidelity })
        })
        .collect::<Result<_>>()?;
    let fidelities: Vec<f64> = per_gate.iter().map(|p| p.fidelity).collect();
    Ok(EvalReport { per_gate, summary: summarize(&fidelities)?, meta })
}

/// One sweep measurement: a named model, a channel, one grid value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: String,
    pub channel: String,
    pub value: f64,
    pub mean_fidelity: f64,
}

/// Per-(model, channel) summary over the swept grid values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub model: String,
    pub channel: String,
    pub summary: Summary,
}

/// Comparative sweep tables for any number of models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepStudy {
    pub rows: Vec<SweepRow>,
    pub summaries: Vec<SweepSummary>,
    pub meta: ReportMeta,
}

impl SweepStudy {
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("model,channel,value,mean_fidelity\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.model, r.channel, r.value, r.mean_fidelity));
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("model,channel,mean,median,min,max\n");
        for s in &self.summaries {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.model, s.channel, s.summary.mean, s.summary.median, s.summary.min, s.summary.max
            ));
        }
        out
    }

    /// Mean fidelity for one (model, channel, value) triple.
    pub fn lookup(&self, model: &str, channel: &str, value: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.channel == channel && r.value == value)
            .map(|r| r.mean_fidelity)
    }
}

/// Sweep every (model × channel × grid value) over one fixed random gate set.
/// Jitter-std channels draw `repeats` realizations per (gate, value) under
/// paths keyed by (channel, value index, gate, repeat).
#[allow(clippy::too_many_arguments)]
pub fn sweep_study(
    models: &[(String, MlpParams)],
    channel_grids: &[(SweepChannel, Vec<f64>)],
    system: &SystemParams,
    amplitude: f64,
    dt: f64,
    gate_set_size: usize,
    degmax: f64,
    repeats: usize,
    seed: u64,
    meta: ReportMeta,
) -> Result<SweepStudy> {
    if models.is_empty() || channel_grids.is_empty() {
        return Err(Error::EmptyInput);
    }
    let root = RngStream::new(seed);
    let gates = sample_gates(gate_set_size, degmax, root.child(domain::GATES));
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (name, params) in models {
        let source = |g: &GateSpec| {
            let (phases, _) =
                mlp_forward(params, &encode_features(g), None).expect("validated model");
            PulseSequence::new(phases, amplitude, dt).expect("positive amplitude and dt")
        };
        for (channel_ix, (channel, grid)) in channel_grids.iter().enumerate() {
            let mut means = Vec::with_capacity(grid.len());
            for (value_ix, &value) in grid.iter().enumerate() {
                let rng = root
                    .child(domain::SWEEP)
                    .child(channel_ix as u64)
                    .child(value_ix as u64);
                let mean = uncertainty::sweep_channel(
                    *channel, value, system, &gates, &source, repeats, rng,
                )?;
                rows.push(SweepRow {
                    model: name.clone(),
                    channel: channel.name().to_string(),
                    value,
                    mean_fidelity: mean,
                });
                means.push(mean);
            }
            summaries.push(SweepSummary {
                model: name.clone(),
                channel: channel.name().to_string(),
                summary: summarize(&means)?,
            });
        }
    }
    Ok(SweepStudy { rows, summaries, meta })
}

/// Training curve as CSV.
pub fn curve_csv(curve: &[TrainCurvePoint]) -> String {
    let mut out = String::from("epoch,train_loss,objective,val_fidelity\n");
    for p in curve {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.epoch, p.train_loss, p.objective, p.val_fidelity
        ));
    }
    out
}

/// Parse `start:stop:count` (inclusive at both ends) into grid values.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::ConfigError(format!("grid '{spec}' is not start:stop:count")));
    }
    let start: f64 = parts[0]
        .parse()
        .map_err(|_| Error::ConfigError(format!("bad grid start '{}'", parts[0])))?;
    let stop: f64 = parts[1]
        .parse()
        .map_err(|_| Error::ConfigError(format!("bad grid stop '{}'", parts[1])))?;
    let count: usize = parts[2]
        .parse()
        .map_err(|_| Error::ConfigError(format!("bad grid count '{}'", parts[2])))?;
    if count == 0 {
        return Err(Error::ConfigError("grid count must be positive".into()));
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    let step = (stop - start) / (count - 1) as f64;
    Ok((0..count).map(|i| start + step * i as f64).collect())
}

//! Command implementations and the exit-code policy.

use std::fs;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use spinforge_core::config::{content_hash, RunConfig, Stage};
use spinforge_core::mlp::{Checkpoint, MlpParams};
use spinforge_core::physics::GateSpec;
use spinforge_core::pipeline::{
    self, compile_gate, curve_csv, eval_grid, parse_grid, sweep_study, ReportMeta, TrainOutput,
};
use spinforge_core::uncertainty::SweepChannel;

use crate::pulsefile::PulseFile;

/// Command-level error: configuration problems exit 2, I/O problems exit 3.
#[derive(Error, Debug)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<spinforge_core::Error> for CliError {
    fn from(err: spinforge_core::Error) -> Self {
        CliError::Config(err.to_string())
    }
}

type CliResult = Result<(), CliError>;

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> CliResult {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
        }
    }
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load_config(path: &Path) -> Result<(RunConfig, String), CliError> {
    let text = read_file(path)?;
    let config = RunConfig::from_json(&text).map_err(|e| CliError::Config(e.to_string()))?;
    Ok((config, content_hash(text.as_bytes())))
}

/// Checkpoints that exist but do not parse are I/O failures, not config ones.
fn load_checkpoint(path: &Path) -> Result<(Checkpoint, String), CliError> {
    let text = read_file(path)?;
    let ckpt = Checkpoint::from_json(&text)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok((ckpt, content_hash(text.as_bytes())))
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    schema_version: u32,
    stage: &'a str,
    seed: u64,
    config_hash: &'a str,
    epochs: usize,
    final_train_loss: Option<f64>,
    final_objective: Option<f64>,
    best_val_epoch: Option<usize>,
    best_val_fidelity: Option<f64>,
}

pub fn train(
    config_path: &Path,
    stage: &str,
    seed: u64,
    init: Option<&Path>,
    out_dir: &Path,
) -> CliResult {
    let (run, config_hash) = load_config(config_path)?;
    let stage = Stage::parse(stage)?;
    let cfg = run.train_config(stage, seed)?;
    let output: TrainOutput = match stage {
        Stage::Nominal => pipeline::train_nominal(&cfg)?,
        Stage::Robust => {
            let init_path = init.ok_or_else(|| {
                CliError::Config("--stage robust requires --init <checkpoint>".into())
            })?;
            let (ckpt, _) = load_checkpoint(init_path)?;
            pipeline::train_robust(&cfg, ckpt.params())?
        }
    };

    let checkpoint = Checkpoint::new(output.params, Some(output.opt_state), seed);
    write_file(&out_dir.join("checkpoint.json"), &checkpoint.to_json())?;
    write_file(&out_dir.join("curve.csv"), &curve_csv(&output.curve))?;
    let summary = TrainSummary {
        schema_version: 1,
        stage: stage.name(),
        seed,
        config_hash: &config_hash,
        epochs: output.curve.len(),
        final_train_loss: output.curve.last().map(|p| p.train_loss),
        final_objective: output.curve.last().map(|p| p.objective),
        best_val_epoch: output.best_val.map(|(e, _)| e),
        best_val_fidelity: output.best_val.map(|(_, f)| f),
    };
    let summary_json =
        serde_json::to_string_pretty(&summary).expect("summary serialization cannot fail");
    write_file(&out_dir.join("train_summary.json"), &summary_json)?;
    println!(
        "trained stage={} epochs={} -> {}",
        stage.name(),
        summary.epochs,
        out_dir.join("checkpoint.json").display()
    );
    Ok(())
}

pub fn compile(
    gamma_deg: f64,
    theta_deg: f64,
    alpha_deg: f64,
    config_path: &Path,
    model_path: &Path,
    out: &Path,
    csv: Option<&Path>,
) -> CliResult {
    let (run, _) = load_config(config_path)?;
    let (ckpt, model_hash) = load_checkpoint(model_path)?;
    let params = ckpt.params();
    params.validate()?;
    let model = run.system.coupling_model()?;
    let system = run.system.system_params(model)?;
    let gate = GateSpec::from_degrees(gamma_deg, theta_deg, alpha_deg);
    let (pulse, fidelity) =
        compile_gate(&params, &gate, &system, run.system.amplitude_khz, run.system.dt_ms)?;
    let pulse_file = PulseFile::new(&gate, &pulse, fidelity, model_hash, ckpt.seed);
    write_file(out, &pulse_file.to_json())?;
    if let Some(csv_path) = csv {
        write_file(csv_path, &pulse_file.to_csv())?;
    }
    println!(
        "compiled ({gamma_deg}°, {theta_deg}°, {alpha_deg}°) fidelity={fidelity:.6} -> {}",
        out.display()
    );
    Ok(())
}

pub fn eval(
    config_path: &Path,
    model_path: &Path,
    mesh_deg: f64,
    degmax_deg: f64,
    out_dir: &Path,
) -> CliResult {
    let (run, config_hash) = load_config(config_path)?;
    let (ckpt, model_hash) = load_checkpoint(model_path)?;
    let params = ckpt.params();
    params.validate()?;
    let model = run.system.coupling_model()?;
    let system = run.system.system_params(model)?;
    let meta = ReportMeta::new(config_hash, model_hash, None);
    let report = eval_grid(
        &params,
        &system,
        run.system.amplitude_khz,
        run.system.dt_ms,
        mesh_deg,
        degmax_deg,
        meta,
    )?;
    write_file(&out_dir.join("eval_gates.csv"), &report.per_gate_csv())?;
    write_file(&out_dir.join("eval_summary.json"), &report.summary_json())?;
    println!(
        "evaluated {} gates: mean={:.6} median={:.6} min={:.6} max={:.6}",
        report.per_gate.len(),
        report.summary.mean,
        report.summary.median,
        report.summary.min,
        report.summary.max
    );
    Ok(())
}

/// Built-in grids for `--channel all`. Phase channels are in degrees here and
/// converted below.
fn default_grid(channel: SweepChannel) -> Vec<f64> {
    match channel {
        SweepChannel::AlphaG
        | SweepChannel::VScale
        | SweepChannel::JScale
        | SweepChannel::DtScale => parse_grid("0.5:1.5:11").unwrap(),
        SweepChannel::Phi0 => parse_grid("-10:10:11").unwrap(),
        SweepChannel::AJitStd => parse_grid("0:0.1:11").unwrap(),
        SweepChannel::PhiJitStd => parse_grid("0:5:11").unwrap(),
        SweepChannel::DtJitStd => parse_grid("0:0.05:11").unwrap(),
    }
}

fn is_phase_channel(channel: SweepChannel) -> bool {
    matches!(channel, SweepChannel::Phi0 | SweepChannel::PhiJitStd)
}

#[allow(clippy::too_many_arguments)]
pub fn sweep(
    config_path: &Path,
    models_spec: &str,
    channels: &[String],
    grid: Option<&str>,
    seed: u64,
    gates: Option<usize>,
    repeats: Option<usize>,
    out_dir: &Path,
) -> CliResult {
    let (run, config_hash) = load_config(config_path)?;
    if channels.is_empty() {
        return Err(CliError::Config("at least one --channel is required".into()));
    }

    let mut models: Vec<(String, MlpParams)> = Vec::new();
    let mut model_hashes = Vec::new();
    for pair in models_spec.split(',') {
        let Some((name, path)) = pair.split_once('=') else {
            return Err(CliError::Config(format!(
                "--models entry '{pair}' is not of the form name=path"
            )));
        };
        let (ckpt, hash) = load_checkpoint(Path::new(path))?;
        let params = ckpt.params();
        params.validate()?;
        models.push((name.to_string(), params));
        model_hashes.push(hash);
    }

    let selected: Vec<SweepChannel> = if channels.iter().any(|c| c == "all") {
        SweepChannel::ALL.to_vec()
    } else {
        channels
            .iter()
            .map(|c| SweepChannel::parse(c))
            .collect::<Result<_, _>>()?
    };
    let channel_grids: Vec<(SweepChannel, Vec<f64>)> = selected
        .into_iter()
        .map(|channel| -> Result<_, CliError> {
            let values = match grid {
                Some(spec) => parse_grid(spec)?,
                None => default_grid(channel),
            };
            // Degrees at the boundary, radians inside.
            let values = if is_phase_channel(channel) {
                values.into_iter().map(|v| v.to_radians()).collect()
            } else {
                values
            };
            Ok((channel, values))
        })
        .collect::<Result<_, _>>()?;

    let model = run.system.coupling_model()?;
    let system = run.system.system_params(model)?;
    let meta = ReportMeta::new(config_hash, model_hashes.join("+"), Some(seed));
    let study = sweep_study(
        &models,
        &channel_grids,
        &system,
        run.system.amplitude_khz,
        run.system.dt_ms,
        gates.unwrap_or(run.robust.eval_set_size),
        run.network.degmax_deg.to_radians(),
        repeats.unwrap_or(run.robust.sweep_repeats),
        seed,
        meta,
    )?;
    write_file(&out_dir.join("sweep_curves.csv"), &study.curves_csv())?;
    write_file(&out_dir.join("sweep_summary.csv"), &study.summary_csv())?;
    let meta_json =
        serde_json::to_string_pretty(&study.meta).expect("meta serialization cannot fail");
    write_file(&out_dir.join("sweep_meta.json"), &meta_json)?;
    println!("swept {} rows -> {}", study.rows.len(), out_dir.display());
    Ok(())
}

pub fn inspect(path: &Path) -> CliResult {
    let text = read_file(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Io(format!("{}: not JSON: {e}", path.display())))?;
    let hash = content_hash(text.as_bytes());
    if value.get("weights").is_some() && value.get("layer_dims").is_some() {
        let ckpt = Checkpoint::from_json(&text)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let n_params: usize = ckpt.weights.iter().map(Vec::len).sum::<usize>()
            + ckpt.biases.iter().map(Vec::len).sum::<usize>();
        println!("kind: checkpoint");
        println!("schema_version: {}", ckpt.schema_version);
        println!("layer_dims: {:?}", ckpt.layer_dims);
        println!("parameters: {n_params}");
        println!("optimizer_state: {}", ckpt.optimizer_state.is_some());
        println!("seed: {}", ckpt.seed);
        println!("sha256: {hash}");
    } else if value.get("phases_rad").is_some() {
        let pulse = PulseFile::from_json(&text)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        println!("kind: pulse");
        println!("schema_version: {}", pulse.schema_version);
        println!(
            "gate: gamma={}° theta={}° alpha={}°",
            pulse.gate.gamma_deg, pulse.gate.theta_deg, pulse.gate.alpha_deg
        );
        println!("t_slices: {}", pulse.t_slices);
        println!("dt_ms: {}", pulse.dt_ms);
        println!("amplitude_khz: {}", pulse.amplitude_khz);
        println!("nominal_fidelity: {}", pulse.nominal_fidelity);
        println!("model_hash: {}", pulse.model_hash);
        println!("seed: {}", pulse.seed);
        println!("sha256: {hash}");
    } else if value.get("summary").is_some() || value.get("meta").is_some() {
        println!("kind: report");
        println!("{}", serde_json::to_string_pretty(&value).unwrap());
        println!("sha256: {hash}");
    } else {
        return Err(CliError::Io(format!(
            "{}: unrecognized file kind",
            path.display()
        )));
    }
    Ok(())
}

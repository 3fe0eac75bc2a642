//! `spinforge` — train the pulse compiler, compile gates to pulse files, and
//! run grid evaluations and perturbation sweeps.
//!
//! Exit codes: 0 success, 2 configuration/usage error, 3 I/O error.

mod commands;
mod pulsefile;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "spinforge", version, about = "Neural pulse compiler for a three-spin register")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores). Results are
    /// identical for any value.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model (nominal stage, or robust re-optimization from --init).
    Train {
        /// Run configuration JSON.
        #[arg(long)]
        config: PathBuf,
        /// "nominal" or "robust".
        #[arg(long)]
        stage: String,
        /// Master seed; all randomness in the run derives from it.
        #[arg(long)]
        seed: u64,
        /// Checkpoint to re-optimize from (required for --stage robust).
        #[arg(long)]
        init: Option<PathBuf>,
        /// Output directory for checkpoint.json, curve.csv, train_summary.json.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Compile one gate (angles in degrees) into a pulse file.
    Compile {
        gamma_deg: f64,
        theta_deg: f64,
        alpha_deg: f64,
        #[arg(long)]
        config: PathBuf,
        /// Trained checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Pulse JSON output path.
        #[arg(long)]
        out: PathBuf,
        /// Optional flat CSV (slice_index, phase_rad).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Evaluate a model on the inclusive (gamma, theta, alpha) degree grid.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Grid spacing in degrees; must divide --degmax-deg.
        #[arg(long)]
        mesh_deg: f64,
        #[arg(long, default_value_t = 90.0)]
        degmax_deg: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Sweep perturbation channels for one or more models.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated name=path checkpoint pairs, e.g.
        /// "nominal=a.json,robust=b.json".
        #[arg(long)]
        models: String,
        /// Channel name (alpha_g, phi0, v_scale, j_scale, dt_scale,
        /// a_jit_std, phi_jit_std, dt_jit_std) or "all". May repeat.
        #[arg(long)]
        channel: Vec<String>,
        /// Grid "start:stop:count" (inclusive). Phase channels take degrees.
        /// Applies to every selected channel; "all" uses built-in grids.
        #[arg(long)]
        grid: Option<String>,
        /// Seed for the gate set and jitter realizations.
        #[arg(long)]
        seed: u64,
        /// Random gate-set size (default: robust.eval_set_size from config).
        #[arg(long)]
        gates: Option<usize>,
        /// Realizations per (gate, value) on jitter-std channels
        /// (default: robust.sweep_repeats from config).
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print metadata of a checkpoint, pulse file, or report.
    Inspect { path: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.unwrap_or(0))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: failed to build worker pool: {e}");
            return ExitCode::from(2);
        }
    };
    let result = pool.install(|| match cli.command {
        Command::Train { config, stage, seed, init, out_dir } => {
            commands::train(&config, &stage, seed, init.as_deref(), &out_dir)
        }
        Command::Compile { gamma_deg, theta_deg, alpha_deg, config, model, out, csv } => {
            commands::compile(gamma_deg, theta_deg, alpha_deg, &config, &model, &out, csv.as_deref())
        }
        Command::Eval { config, model, mesh_deg, degmax_deg, out_dir } => {
            commands::eval(&config, &model, mesh_deg, degmax_deg, &out_dir)
        }
        Command::Sweep { config, models, channel, grid, seed, gates, repeats, out_dir } => {
            commands::sweep(
                &config,
                &models,
                &channel,
                grid.as_deref(),
                seed,
                gates,
                repeats,
                &out_dir,
            )
        }
        Command::Inspect { path } => commands::inspect(&path),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

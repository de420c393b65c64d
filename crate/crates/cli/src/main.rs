//! `sbm`: variational ground states of the spin-boson model.
//!
//! Exit codes: 0 success, 1 runtime or convergence failure, 2 usage or
//! configuration error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sbm_core::SbmError;

use crate::commands::{FitKind, FitRequest};
use crate::config::{CommonArgs, RunConfig};

pub const OUTPUT_ROOT_VAR: &str = "SBM_OUTPUT_ROOT";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<SbmError> for CliError {
    fn from(e: SbmError) -> Self {
        match e {
            SbmError::Parameter(_) | SbmError::Domain(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "sbm", version, about = "Spin-boson ground states from a multi-coherent-state ansatz")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the discretized bath modes
    Discretize {
        #[command(flatten)]
        common: CommonArgs,
        /// Also print the CSV
        #[arg(long)]
        stdout: bool,
    },
    /// Ground state and observables at one coupling
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint to add as a warm start
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Sweep the coupling and locate the symmetry-breaking jump
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated coupling grid
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        #[arg(long)]
        alpha_min: Option<f64>,
        #[arg(long)]
        alpha_max: Option<f64>,
        #[arg(long)]
        alpha_step: Option<f64>,
        /// Solve every point from random starts only
        #[arg(long)]
        no_warm_start: bool,
        /// Skip the per-point mode files
        #[arg(long)]
        no_modes: bool,
    },
    /// Ground-state energy against N or M
    Converge {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_parser = ["N", "M"])]
        axis: Option<String>,
        /// Comma-separated ascending values
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<usize>>,
    },
    /// Fit two columns of a CSV written by another subcommand
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long, value_enum)]
        model: FitKind,
        #[arg(long)]
        x_min: Option<f64>,
        #[arg(long)]
        x_max: Option<f64>,
        #[arg(long, short = 'o', default_value = "sbm-fit")]
        out: PathBuf,
    },
    /// Check the closed-form observables against exact diagonalization
    Validate {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 30)]
        n_max: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, short = 'o', default_value = "sbm-validate")]
        out: PathBuf,
    },
}

fn under_root(dir: PathBuf) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(dir),
        _ => dir,
    }
}

fn init_threads(cfg: &RunConfig) {
    if cfg.output.threads > 0 {
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.output.threads)
            .build_global();
    }
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    match cli.command {
        Command::Discretize { common, stdout } => commands::discretize(&common.resolve()?, stdout),
        Command::Solve { common, init } => {
            let cfg = common.resolve()?;
            init_threads(&cfg);
            commands::solve(&cfg, init.as_deref())
        }
        Command::Sweep {
            common,
            alphas,
            alpha_min,
            alpha_max,
            alpha_step,
            no_warm_start,
            no_modes,
        } => {
            let mut cfg = common.resolve()?;
            if let Some(a) = alphas {
                cfg.sweep.alphas = a;
            }
            if alpha_min.is_some() || alpha_max.is_some() || alpha_step.is_some() {
                cfg.sweep.alphas.clear();
            }
            if let Some(v) = alpha_min {
                cfg.sweep.alpha_min = v;
            }
            if let Some(v) = alpha_max {
                cfg.sweep.alpha_max = v;
            }
            if let Some(v) = alpha_step {
                cfg.sweep.alpha_step = v;
            }
            cfg.sweep.warm_start &= !no_warm_start;
            cfg.sweep.write_modes &= !no_modes;
            init_threads(&cfg);
            commands::sweep(&cfg)
        }
        Command::Converge { common, axis, values } => {
            let mut cfg = common.resolve()?;
            if let Some(axis) = axis {
                cfg.converge.axis = serde_json::from_value(axis.into()).expect("checked by clap");
            }
            if let Some(v) = values {
                cfg.converge.values = v;
            }
            init_threads(&cfg);
            commands::converge(&cfg)
        }
        Command::Fit {
            input,
            x,
            y,
            model,
            x_min,
            x_max,
            out,
        } => commands::fit(
            &FitRequest {
                input,
                x,
                y,
                model,
                x_min,
                x_max,
            },
            under_root(out),
        ),
        Command::Validate {
            trials,
            n_max,
            seed,
            tol,
            out,
        } => commands::validate(trials, n_max, seed, tol, under_root(out)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(dir) => {
            eprintln!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

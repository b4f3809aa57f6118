use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use sili_core::trainer::evaluate;
use sili_lab::outputs::{emit_outputs, read_metrics, write_plots};
use sili_lab::sweep::{parse_betas, sweep_beta};
use sili_lab::{checkpoint, run_experiment, ConfigError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "sili", version, about = "Train and evaluate agents that stabilize a changing opponent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write metrics, plots and checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Replaces the config's seed list.
        #[arg(long = "seed", num_args = 1..)]
        seeds: Vec<u64>,
    },
    /// Evaluate a checkpoint with deterministic actions.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
    },
    /// Repeat an experiment for several stability weights.
    SweepBeta {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated, e.g. `0,0.2,0.5,1`.
        #[arg(long)]
        betas: String,
    },
    /// Redraw the reward plots from a metrics file.
    Plot {
        #[arg(long)]
        metrics: PathBuf,
    },
}

enum Failure {
    Config(String),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Train { config, seeds } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if !seeds.is_empty() {
                cfg.seeds = seeds;
                cfg.validate()?;
            }
            let result = run_experiment(&cfg)?;
            emit_outputs(&result, &cfg.output_dir)?;
            println!("wrote {} rows to {}", result.rows().len(), cfg.output_dir.display());
            let failures = result.failures();
            if !failures.is_empty() {
                for f in &failures {
                    eprintln!("seed {} aborted at interaction {}: {}", f.seed, f.interaction, f.error);
                }
                return Err(Failure::Runtime(anyhow::anyhow!("{} of {} seeds aborted", failures.len(), cfg.seeds.len())));
            }
            Ok(())
        }
        Command::Eval { checkpoint, episodes } => {
            let (manifest, mut agent, mut env) = checkpoint::load(&checkpoint)?;
            let report = evaluate(&mut agent, &mut env, episodes).map_err(anyhow::Error::from)?;
            let summary = serde_json::json!({
                "kind": manifest.kind,
                "seed": manifest.seed,
                "episodes": episodes,
                "mean_task_reward": report.mean_task,
                "mean_stability_reward": report.mean_stability,
                "strategy_changed": report.strategy_changed,
            });
            println!("{}", serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)?);
            Ok(())
        }
        Command::SweepBeta { config, betas } => {
            let cfg = ExperimentConfig::load(&config)?;
            let betas = parse_betas(&betas)?;
            let out = cfg.output_dir.clone();
            let table = sweep_beta(&cfg, &betas, Some(&out))?;
            for row in &table {
                match (&row.error, row.final_task_reward, row.final_stability_reward) {
                    (None, Some(t), Some(s)) => println!("beta {:<5} task {t:>10.2} stability {s:>10.2}", row.beta),
                    (err, _, _) => println!("beta {:<5} failed: {}", row.beta, err.as_deref().unwrap_or("no data")),
                }
            }
            println!("wrote {}", out.join("sweep.csv").display());
            Ok(())
        }
        Command::Plot { metrics } => {
            let rows = read_metrics(&metrics)?;
            let dir = metrics.parent().map(PathBuf::from).unwrap_or_default();
            let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
            for p in write_plots(&dir, &rows).context("drawing plots")? {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}

//! Multi-seed experiment execution.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use sili_core::envs::AnyEnv;
use sili_core::trainer::{AgentSnapshot, MetricRow, Trainer};
use sili_core::types::InteractionTrajectory;

use crate::{ConfigError, ExperimentConfig};

/// Deterministic evaluation of the current policy during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub seed: u64,
    pub interaction: u64,
    pub mean_task_reward: f64,
    pub mean_stability_reward: f64,
}

/// Why a seed stopped early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub interaction: u64,
    pub error: String,
}

/// Everything one seed produced.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub rows: Vec<MetricRow>,
    pub evals: Vec<EvalRow>,
    /// Wall-clock milliseconds per interaction, aligned with `rows`.
    pub wall_ms: Vec<f64>,
    pub trajectories: Vec<InteractionTrajectory>,
    pub failure: Option<SeedFailure>,
    pub snapshot: Option<(AgentSnapshot, AnyEnv, u64)>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedOutcome>,
}

impl ExperimentResult {
    /// All metric rows, seed-major in config order.
    pub fn rows(&self) -> Vec<MetricRow> {
        self.seeds.iter().flat_map(|s| s.rows.iter().copied()).collect()
    }

    pub fn failures(&self) -> Vec<&SeedFailure> {
        self.seeds.iter().filter_map(|s| s.failure.as_ref()).collect()
    }
}

/// Runs every seed; a failing seed is recorded and the others continue.
/// Seeds run on separate threads and share nothing.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, ConfigError> {
    cfg.validate()?;
    let trainer_cfg = cfg.trainer_config()?;
    let mut envs = Vec::new();
    for &seed in &cfg.seeds {
        envs.push(cfg.build_env(seed)?);
    }
    let seeds = std::thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .seeds
            .iter()
            .zip(envs)
            .map(|(&seed, env)| {
                let trainer_cfg = &trainer_cfg;
                scope.spawn(move || run_seed(cfg, env, trainer_cfg, seed))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("seed worker panicked")).collect()
    });
    Ok(ExperimentResult { config: cfg.clone(), seeds })
}

fn run_seed(
    cfg: &ExperimentConfig,
    env: AnyEnv,
    trainer_cfg: &sili_core::trainer::TrainerConfig,
    seed: u64,
) -> SeedOutcome {
    let mut out = SeedOutcome {
        seed,
        rows: Vec::new(),
        evals: Vec::new(),
        wall_ms: Vec::new(),
        trajectories: Vec::new(),
        failure: None,
        snapshot: None,
    };
    let mut trainer = match Trainer::new(env, trainer_cfg, seed) {
        Ok(t) => t,
        Err(e) => {
            out.failure = Some(SeedFailure { seed, interaction: 0, error: e.to_string() });
            return out;
        }
    };
    for j in 1..=cfg.interactions {
        let start = Instant::now();
        let step = trainer.run_interaction().and_then(|row| {
            if j % cfg.eval_every == 0 {
                let report = trainer.evaluate(cfg.eval_episodes)?;
                out.evals.push(EvalRow {
                    seed,
                    interaction: j,
                    mean_task_reward: report.mean_task,
                    mean_stability_reward: report.mean_stability,
                });
            }
            Ok(row)
        });
        match step {
            Ok(row) => {
                out.rows.push(row);
                out.wall_ms.push(start.elapsed().as_secs_f64() * 1e3);
                if cfg.log_trajectories {
                    if let Some(t) = trainer.buffer().latest() {
                        out.trajectories.push(t.clone());
                    }
                }
            }
            Err(e) => {
                out.failure = Some(SeedFailure { seed, interaction: j, error: e.to_string() });
                break;
            }
        }
    }
    out.snapshot = Some((trainer.snapshot(), trainer.env().clone(), trainer.interactions_done()));
    out
}

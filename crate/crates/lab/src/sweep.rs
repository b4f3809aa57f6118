//! β sweeps: one full experiment per β, summarized over the final window.

use std::path::Path;

use anyhow::Result;
use serde::{Deserialize, Serialize};
use sili_core::stability::StabilityConfig;

use crate::analysis::{mean_over_seeds, FINAL_WINDOW};
use crate::outputs::{emit_outputs, write_csv};
use crate::run::run_experiment;
use crate::{ConfigError, ExperimentConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub final_task_reward: Option<f64>,
    pub final_stability_reward: Option<f64>,
    pub stable_fraction: Option<f64>,
    pub seeds_completed: usize,
    pub error: Option<String>,
}

/// Checks and parses a comma-separated list such as `0,0.2,0.5`.
pub fn parse_betas(text: &str) -> Result<Vec<f64>, ConfigError> {
    let betas: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| ConfigError(format!("bad beta {s:?}: {e}"))))
        .collect::<Result<_, _>>()?;
    if betas.is_empty() || betas.iter().any(|b| !(0.0..=1.0).contains(b)) {
        return Err(ConfigError(format!("betas must lie in [0, 1], got {text:?}")));
    }
    Ok(betas)
}

/// The base config with a fixed β (no annealing).
pub fn with_beta(cfg: &ExperimentConfig, beta: f64) -> Result<ExperimentConfig, ConfigError> {
    let metric = cfg.resolved_stability()?.metric;
    let mut out = cfg.clone();
    out.stability = Some(StabilityConfig { beta, metric, anneal: None });
    out.validate()?;
    Ok(out)
}

/// Runs every β; a failing run becomes a row with an error instead of
/// stopping the sweep. With `out_dir`, each run's artifacts go to
/// `beta_<β>/` and the table to `sweep.csv`.
pub fn sweep_beta(cfg: &ExperimentConfig, betas: &[f64], out_dir: Option<&Path>) -> Result<Vec<SweepRow>> {
    let mut table = Vec::new();
    for &beta in betas {
        let run = with_beta(cfg, beta).and_then(|c| run_experiment(&c));
        let row = match run {
            Ok(res) => {
                if let Some(dir) = out_dir {
                    emit_outputs(&res, &dir.join(format!("beta_{beta}")))?;
                }
                let rows = res.rows();
                let stats = mean_over_seeds(&rows, FINAL_WINDOW);
                let failures = res.failures();
                SweepRow {
                    beta,
                    final_task_reward: stats.map(|s| s.mean_task),
                    final_stability_reward: stats.map(|s| s.mean_stability),
                    stable_fraction: stats.map(|s| s.stable_fraction),
                    seeds_completed: res.seeds.len() - failures.len(),
                    error: (!failures.is_empty())
                        .then(|| failures.iter().map(|f| format!("seed {}: {}", f.seed, f.error)).collect::<Vec<_>>().join("; ")),
                }
            }
            Err(e) => SweepRow {
                beta,
                final_task_reward: None,
                final_stability_reward: None,
                stable_fraction: None,
                seeds_completed: 0,
                error: Some(e.to_string()),
            },
        };
        table.push(row);
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        write_csv(&dir.join("sweep.csv"), &table)?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sili_core::agents::AgentKind;

    #[test]
    fn beta_lists_are_validated() {
        assert_eq!(parse_betas("0, 0.5,1").unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(parse_betas("0.5,1.2").is_err());
        assert!(parse_betas("x").is_err());
        assert!(parse_betas("").is_err());
    }

    #[test]
    fn single_beta_matches_a_plain_run() {
        let mut cfg = crate::run::tests::tiny(AgentKind::Sili);
        cfg.seeds = vec![2];
        let table = sweep_beta(&cfg, &[0.5], None).unwrap();
        let plain = run_experiment(&with_beta(&cfg, 0.5).unwrap()).unwrap();
        let stats = mean_over_seeds(&plain.rows(), FINAL_WINDOW).unwrap();
        assert_eq!(table.len(), 1);
        assert_eq!(table[0].final_task_reward, Some(stats.mean_task));
        assert_eq!(table[0].seeds_completed, 1);
        assert!(table[0].error.is_none());
    }

    #[test]
    fn a_bad_run_does_not_abort_the_sweep() {
        let mut cfg = crate::run::tests::tiny(AgentKind::Sac);
        cfg.seeds = vec![1];
        let dir = tempfile::tempdir().unwrap();
        // β outside [0, 1] is rejected per run, yet the other row is produced.
        let table = sweep_beta(&cfg, &[2.0, 0.0], Some(dir.path())).unwrap();
        assert!(table[0].error.is_some());
        assert!(table[1].error.is_none());
        let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(dir.path().join("beta_0/metrics.csv").exists());
    }
}

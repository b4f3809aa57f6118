//! Run artifacts: metrics, evaluations, timings, plots, checkpoints and logs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sili_core::trainer::MetricRow;

use crate::plot::{band, svg, SMOOTHING_WINDOW};
use crate::run::{EvalRow, ExperimentResult, SeedFailure};
use crate::{checkpoint, trajlog};

pub const METRICS_HEADER: &str = "seed,interaction,task_reward,stability_reward,beta,strategy_changed";

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Writes `metrics.csv`, always with a header even when empty.
pub fn write_metrics(path: &Path, rows: &[MetricRow]) -> Result<()> {
    if rows.is_empty() {
        return fs::write(path, format!("{METRICS_HEADER}\n")).with_context(|| format!("writing {}", path.display()));
    }
    write_csv(path, rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header = r.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != METRICS_HEADER {
        anyhow::bail!("{}: unexpected header {header:?}", path.display());
    }
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row.with_context(|| format!("parsing {}", path.display()))?);
    }
    Ok(rows)
}

/// Task and stability reward curves next to the metrics.
pub fn write_plots(dir: &Path, rows: &[MetricRow]) -> Result<Vec<PathBuf>> {
    let task = dir.join("task_reward.svg");
    let stab = dir.join("stability_reward.svg");
    let t = band(rows, |r| r.task_reward, SMOOTHING_WINDOW);
    let s = band(rows, |r| r.stability_reward, SMOOTHING_WINDOW);
    fs::write(&task, svg("Task reward", "task reward per interaction", &t))
        .with_context(|| format!("writing {}", task.display()))?;
    fs::write(&stab, svg("Stability reward", "stability reward per interaction", &s))
        .with_context(|| format!("writing {}", stab.display()))?;
    Ok(vec![task, stab])
}

#[derive(Serialize)]
struct TimingRow {
    seed: u64,
    interaction: u64,
    wall_ms: f64,
}

/// Writes every artifact of a run into `dir`. Wall-clock times go to
/// `timing.csv` only, so `metrics.csv` is reproducible byte for byte.
pub fn emit_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let rows = result.rows();
    write_metrics(&dir.join("metrics.csv"), &rows)?;
    let resolved = result.config.resolved().map_err(|e| anyhow::anyhow!(e))?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(&resolved)? + "\n")
        .with_context(|| format!("writing {}", dir.join("config.json").display()))?;
    let evals: Vec<EvalRow> = result.seeds.iter().flat_map(|s| s.evals.iter().copied()).collect();
    write_csv(&dir.join("eval.csv"), &evals)?;
    let timing: Vec<TimingRow> = result
        .seeds
        .iter()
        .flat_map(|s| {
            s.rows.iter().zip(&s.wall_ms).map(|(r, &ms)| TimingRow { seed: s.seed, interaction: r.interaction, wall_ms: ms })
        })
        .collect();
    write_csv(&dir.join("timing.csv"), &timing)?;
    let failures: Vec<&SeedFailure> = result.failures();
    let fail_path = dir.join("failures.json");
    if failures.is_empty() {
        if fail_path.exists() {
            fs::remove_file(&fail_path)?;
        }
    } else {
        fs::write(&fail_path, serde_json::to_string_pretty(&failures)? + "\n")
            .with_context(|| format!("writing {}", fail_path.display()))?;
    }
    write_plots(dir, &rows)?;
    for s in &result.seeds {
        if let Some((agent, env, n)) = &s.snapshot {
            checkpoint::save(&dir.join("checkpoints").join(format!("seed{}", s.seed)), agent, env, s.seed, *n)?;
        }
        if result.config.log_trajectories {
            trajlog::write_trajectories(&dir.join(format!("trajectories_seed{}.ndjson", s.seed)), &s.trajectories)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::run::run_experiment;
    use sili_core::agents::AgentKind;

    #[test]
    fn metrics_have_the_fixed_header_and_one_row_per_interaction() {
        let cfg = crate::run::tests::tiny(AgentKind::Sac);
        let res = run_experiment(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_outputs(&res, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), METRICS_HEADER);
        assert_eq!(lines.count(), 6);
        assert_eq!(read_metrics(&dir.path().join("metrics.csv")).unwrap(), res.rows());
        for f in ["config.json", "eval.csv", "timing.csv", "task_reward.svg", "stability_reward.svg"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert!(dir.path().join("checkpoints/seed4/manifest.json").exists());
        assert!(!dir.path().join("failures.json").exists());
    }

    #[test]
    fn emitting_twice_gives_identical_bytes() {
        let mut cfg = crate::run::tests::tiny(AgentKind::Lili);
        cfg.log_trajectories = true;
        let res = run_experiment(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_outputs(&res, dir.path()).unwrap();
        let files = ["metrics.csv", "config.json", "eval.csv", "task_reward.svg", "trajectories_seed5.ndjson"];
        let first: Vec<Vec<u8>> = files.iter().map(|f| fs::read(dir.path().join(f)).unwrap()).collect();
        emit_outputs(&res, dir.path()).unwrap();
        for (f, bytes) in files.iter().zip(first) {
            assert_eq!(fs::read(dir.path().join(f)).unwrap(), bytes, "{f}");
        }
        let logged = trajlog::read_trajectories(&dir.path().join("trajectories_seed5.ndjson")).unwrap();
        assert_eq!(logged.len(), 3);
    }

    #[test]
    fn empty_metrics_still_have_a_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_metrics(&path, &[]).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), format!("{METRICS_HEADER}\n"));
        assert!(read_metrics(&path).unwrap().is_empty());
    }

    #[test]
    fn unwritable_outputs_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = write_metrics(&blocker.join("metrics.csv"), &[]).unwrap_err();
        assert!(format!("{err:#}").contains("metrics.csv"));
    }
}

//! Summaries over the final interactions of a run.

use serde::{Deserialize, Serialize};
use sili_core::trainer::MetricRow;

/// Default length of the final window.
pub const FINAL_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub interactions: usize,
    pub mean_task: f64,
    pub mean_stability: f64,
    /// Fraction of interactions after which the opponent kept its strategy.
    pub stable_fraction: f64,
    /// Fraction of interactions with a negative task return.
    pub negative_return_rate: f64,
}

/// Stats over the last `window` rows of one seed (fewer if the run is shorter).
pub fn final_window(rows: &[MetricRow], seed: u64, window: usize) -> Option<WindowStats> {
    let seed_rows: Vec<&MetricRow> = rows.iter().filter(|r| r.seed == seed).collect();
    let tail = &seed_rows[seed_rows.len().saturating_sub(window)..];
    if tail.is_empty() {
        return None;
    }
    let n = tail.len() as f64;
    Some(WindowStats {
        interactions: tail.len(),
        mean_task: tail.iter().map(|r| r.task_reward).sum::<f64>() / n,
        mean_stability: tail.iter().map(|r| r.stability_reward).sum::<f64>() / n,
        stable_fraction: tail.iter().filter(|r| !r.strategy_changed).count() as f64 / n,
        negative_return_rate: tail.iter().filter(|r| r.task_reward < 0.0).count() as f64 / n,
    })
}

/// Seeds in first-appearance order.
pub fn seeds(rows: &[MetricRow]) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::new();
    for r in rows {
        if !out.contains(&r.seed) {
            out.push(r.seed);
        }
    }
    out
}

/// Unweighted mean of per-seed window stats.
pub fn mean_over_seeds(rows: &[MetricRow], window: usize) -> Option<WindowStats> {
    let per: Vec<WindowStats> = seeds(rows).into_iter().filter_map(|s| final_window(rows, s, window)).collect();
    if per.is_empty() {
        return None;
    }
    let n = per.len() as f64;
    let avg = |f: fn(&WindowStats) -> f64| per.iter().map(f).sum::<f64>() / n;
    Some(WindowStats {
        interactions: per.iter().map(|w| w.interactions).min().unwrap_or(0),
        mean_task: avg(|w| w.mean_task),
        mean_stability: avg(|w| w.mean_stability),
        stable_fraction: avg(|w| w.stable_fraction),
        negative_return_rate: avg(|w| w.negative_return_rate),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(seed: u64, j: u64, task: f64, changed: bool) -> MetricRow {
        MetricRow {
            seed,
            interaction: j,
            task_reward: task,
            stability_reward: if changed { -50.0 } else { 0.0 },
            beta: 0.5,
            strategy_changed: changed,
        }
    }

    #[test]
    fn window_uses_only_the_tail_of_each_seed() {
        let rows = vec![row(1, 1, -9.0, true), row(1, 2, -1.0, false), row(1, 3, 0.0, false), row(2, 1, -4.0, true)];
        let w = final_window(&rows, 1, 2).unwrap();
        assert_eq!(w.interactions, 2);
        assert_eq!(w.mean_task, -0.5);
        assert_eq!(w.stable_fraction, 1.0);
        assert_eq!(w.negative_return_rate, 0.5);
        let short = final_window(&rows, 2, 100).unwrap();
        assert_eq!(short.interactions, 1);
        assert!(final_window(&rows, 3, 10).is_none());
    }

    #[test]
    fn seed_mean_is_unweighted() {
        let rows = vec![row(1, 1, -2.0, false), row(2, 1, -4.0, true), row(2, 2, -6.0, true)];
        let m = mean_over_seeds(&rows, 2).unwrap();
        assert_eq!(m.mean_task, (-2.0 + -5.0) / 2.0);
        assert_eq!(m.stable_fraction, 0.5);
        assert_eq!(seeds(&rows), vec![1, 2]);
    }
}

//! Stability rewards and their blend with the task reward.

use serde::{Deserialize, Serialize};

use crate::types::{euclidean, LatentStrategy};
use crate::{Error, Result};

pub const DEFAULT_BETA: f64 = 0.5;

/// How consecutive strategies are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StabilityMetric {
    /// Continuous latents, `-||z - z_prev||`.
    Euclidean,
    /// One-hot latents, `-1` when they differ.
    Discrete,
    /// Observed change flags, `-1` on a step where the strategy changed.
    Partial,
}

/// Linear schedule from `start` at interaction 1 to `end` at `interactions`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealSchedule {
    pub start: f64,
    pub end: f64,
    pub interactions: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub beta: f64,
    pub metric: StabilityMetric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anneal: Option<AnnealSchedule>,
}

impl StabilityConfig {
    pub fn new(beta: f64, metric: StabilityMetric) -> Result<Self> {
        let cfg = StabilityConfig { beta, metric, anneal: None };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        if let Some(a) = &self.anneal {
            check_beta(a.start)?;
            check_beta(a.end)?;
            if a.interactions == 0 {
                return Err(Error::invalid("anneal window must be at least one interaction"));
            }
        }
        Ok(())
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::invalid("beta must lie in [0, 1]"));
    }
    Ok(())
}

/// Always `<= 0`; zero exactly when the strategies agree (or no change was flagged).
///
/// In the partial setting `z` carries this step's change flag; `z_prev` only
/// has to be a flag as well.
pub fn stability_reward(z: &LatentStrategy, z_prev: &LatentStrategy, cfg: &StabilityConfig) -> Result<f64> {
    use LatentStrategy::*;
    match (cfg.metric, z, z_prev) {
        (StabilityMetric::Euclidean, Continuous(a), Continuous(b)) if a.len() == b.len() => Ok(-euclidean(a, b)),
        (StabilityMetric::Discrete, Discrete(a), Discrete(b)) if a.len() == b.len() => {
            Ok(if a == b { 0.0 } else { -1.0 })
        }
        (StabilityMetric::Partial, ChangeFlag(changed), ChangeFlag(_)) => Ok(flag_reward(*changed)),
        _ => Err(Error::invalid("latent variant does not match the stability metric")),
    }
}

pub fn flag_reward(changed: bool) -> f64 {
    if changed {
        -1.0
    } else {
        0.0
    }
}

/// `(1 - beta) * r_task + beta * r_stable`.
pub fn total_reward(r_task: f64, r_stable: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok((1.0 - beta) * r_task + beta * r_stable)
}

/// Stability weight for interaction `j` (1-based).
pub fn beta_at(cfg: &StabilityConfig, j: u64) -> f64 {
    match cfg.anneal {
        None => cfg.beta,
        Some(a) => {
            if a.interactions <= 1 || j >= a.interactions {
                a.end
            } else {
                let frac = (j.max(1) - 1) as f64 / (a.interactions - 1) as f64;
                a.start + (a.end - a.start) * frac
            }
        }
    }
}

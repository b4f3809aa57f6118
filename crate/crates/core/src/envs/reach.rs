//! Kinematic 3-D reaching: a velocity-limited end effector approaches one of
//! three table goals. Finishing above the stabilization plane keeps the
//! opponent's goal; finishing below cycles to the next one.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{check_action, clamp_velocity, distance, Clock, HiPMDPEnv, StepOutcome};
use crate::stability::StabilityMetric;
use crate::types::{InteractionTrajectory, LatentStrategy};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReachConfig {
    /// Workspace is the cube `[-half_extent, half_extent]^3`.
    pub half_extent: f64,
    pub goals: [[f64; 3]; 3],
    pub z_threshold: f64,
    pub max_speed: f64,
    pub start: [f64; 3],
    pub initial_goal: usize,
    pub horizon: usize,
}

impl Default for ReachConfig {
    fn default() -> Self {
        ReachConfig {
            half_extent: 1.0,
            goals: [[0.5, 0.0, 0.0], [-0.25, 0.433, 0.0], [-0.25, -0.433, 0.0]],
            z_threshold: 0.3,
            max_speed: 0.1,
            start: [0.0, 0.0, 0.5],
            initial_goal: 0,
            horizon: 50,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReachEnv {
    cfg: ReachConfig,
    clock: Clock,
    pos: [f64; 3],
    goal: usize,
}

impl ReachEnv {
    pub fn new(cfg: ReachConfig) -> Result<Self> {
        let g = &cfg.goals;
        if g.iter().any(|p| p[2] != 0.0) || g[0] == g[1] || g[1] == g[2] || g[0] == g[2] {
            return Err(Error::invalid("reach goals must be distinct and on the table plane z = 0"));
        }
        if cfg.initial_goal > 2 || cfg.horizon == 0 || !(cfg.max_speed > 0.0) {
            return Err(Error::invalid("bad reach configuration"));
        }
        Ok(ReachEnv { clock: Clock::new(cfg.horizon), pos: cfg.start, goal: cfg.initial_goal, cfg })
    }

    pub fn goal_index(&self) -> usize {
        self.goal
    }
}

impl HiPMDPEnv for ReachEnv {
    fn obs_dim(&self) -> usize {
        3
    }

    fn action_dim(&self) -> usize {
        3
    }

    fn action_bound(&self) -> f64 {
        self.cfg.max_speed
    }

    fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    fn reset_interaction(&mut self) -> Result<Vec<f64>> {
        self.clock.reset()?;
        self.pos = self.cfg.start;
        Ok(self.pos.to_vec())
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        check_action(action, 3)?;
        self.clock.tick()?;
        let v = clamp_velocity(action, self.cfg.max_speed, self.cfg.max_speed);
        let h = self.cfg.half_extent;
        for (p, dv) in self.pos.iter_mut().zip(&v) {
            *p = (*p + dv).clamp(-h, h);
        }
        let reward = -distance(&self.pos, &self.cfg.goals[self.goal]);
        Ok(StepOutcome { next_state: self.pos.to_vec(), reward, applied_action: v, change_flag: None })
    }

    fn end_interaction(&mut self, traj: &InteractionTrajectory) -> Result<()> {
        self.clock.finish(traj)?;
        let last = traj.final_state().ok_or_else(|| Error::Protocol("empty trajectory".into()))?;
        if last[2] < self.cfg.z_threshold {
            self.goal = (self.goal + 1) % 3;
        }
        Ok(())
    }

    fn true_strategy(&self) -> LatentStrategy {
        LatentStrategy::one_hot(self.goal, 3).expect("goal < 3")
    }

    /// The opponent's chosen goal position.
    fn oracle_observation(&self) -> Vec<f64> {
        self.cfg.goals[self.goal].to_vec()
    }

    fn oracle_dim(&self) -> usize {
        3
    }

    fn strategy_metric(&self) -> StabilityMetric {
        StabilityMetric::Discrete
    }

    fn default_stability(&self) -> StabilityMetric {
        StabilityMetric::Discrete
    }
}

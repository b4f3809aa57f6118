//! Three-lane overtaking. A fast ego car passes a slow opponent ahead of a
//! center-lane hazard. Merging left before the red line teaches the
//! opponent to yield right next time; otherwise it cuts into the lane the
//! ego used to overtake.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{check_action, Clock, HiPMDPEnv, StepOutcome};
use crate::stability::StabilityMetric;
use crate::types::{InteractionTrajectory, LatentStrategy};
use crate::{Error, Result};

pub const LEFT: usize = 0;
pub const CENTER: usize = 1;
pub const RIGHT: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DrivingConfig {
    /// Lateral lane centers, left to right.
    pub lanes: [f64; 3],
    pub ego_speed: f64,
    pub opponent_speed: f64,
    pub red_line: f64,
    pub hazard_y: f64,
    pub collision_threshold: f64,
    pub ego_lateral_bound: f64,
    pub opponent_lateral_speed: f64,
    /// 1-based step at which the opponent starts moving laterally.
    pub opponent_merge_step: usize,
    /// Lateral position that counts as having merged left.
    pub left_merge_x: f64,
    pub ego_start: [f64; 2],
    pub opponent_start: [f64; 2],
    pub initial_lane: usize,
    pub horizon: usize,
}

impl Default for DrivingConfig {
    fn default() -> Self {
        DrivingConfig {
            lanes: [-1.0, 0.0, 1.0],
            ego_speed: 2.0,
            opponent_speed: 1.0,
            red_line: 3.0,
            hazard_y: 6.0,
            collision_threshold: 0.5,
            ego_lateral_bound: 0.75,
            opponent_lateral_speed: 1.0,
            opponent_merge_step: 2,
            left_merge_x: -0.5,
            ego_start: [0.0, 0.0],
            opponent_start: [0.0, 2.0],
            initial_lane: RIGHT,
            horizon: 10,
        }
    }
}

impl DrivingConfig {
    pub fn nearest_lane(&self, x: f64) -> usize {
        let mut best = 0;
        for i in 1..3 {
            if (x - self.lanes[i]).abs() < (x - self.lanes[best]).abs() {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DrivingEnv {
    cfg: DrivingConfig,
    clock: Clock,
    ego: [f64; 2],
    opponent: [f64; 2],
    lane: usize,
    merged_left_early: bool,
    overtake_lane: Option<usize>,
}

impl DrivingEnv {
    pub fn new(cfg: DrivingConfig) -> Result<Self> {
        if cfg.initial_lane > 2 || cfg.horizon == 0 || !(cfg.ego_lateral_bound > 0.0) {
            return Err(Error::invalid("bad driving configuration"));
        }
        Ok(DrivingEnv {
            clock: Clock::new(cfg.horizon),
            ego: cfg.ego_start,
            opponent: cfg.opponent_start,
            lane: cfg.initial_lane,
            merged_left_early: false,
            overtake_lane: None,
            cfg,
        })
    }

    pub fn intended_lane(&self) -> usize {
        self.lane
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.ego[0], self.ego[1], self.opponent[0], self.opponent[1]]
    }

    fn opponent_target(&self) -> f64 {
        // The hazard forces a centered opponent out of its lane before reaching it.
        if self.lane == CENTER && self.opponent[1] >= self.cfg.hazard_y - self.cfg.opponent_speed {
            self.cfg.lanes[RIGHT]
        } else {
            self.cfg.lanes[self.lane]
        }
    }
}

impl HiPMDPEnv for DrivingEnv {
    fn obs_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn action_bound(&self) -> f64 {
        self.cfg.ego_lateral_bound
    }

    fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    fn reset_interaction(&mut self) -> Result<Vec<f64>> {
        self.clock.reset()?;
        self.ego = self.cfg.ego_start;
        self.opponent = self.cfg.opponent_start;
        self.merged_left_early = false;
        self.overtake_lane = None;
        Ok(self.observe())
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        check_action(action, 1)?;
        let t = self.clock.tick()?;
        let c = &self.cfg;
        let lateral = action[0].clamp(-c.ego_lateral_bound, c.ego_lateral_bound);
        self.ego[0] = (self.ego[0] + lateral).clamp(c.lanes[LEFT], c.lanes[RIGHT]);
        self.ego[1] += c.ego_speed;
        self.opponent[1] += c.opponent_speed;
        if t >= c.opponent_merge_step {
            let dx = self.opponent_target() - self.opponent[0];
            let c = &self.cfg;
            self.opponent[0] += dx.clamp(-c.opponent_lateral_speed, c.opponent_lateral_speed);
        }
        let c = &self.cfg;
        if self.ego[1] < c.red_line && self.ego[0] <= c.left_merge_x {
            self.merged_left_early = true;
        }
        if self.overtake_lane.is_none() && self.ego[1] > self.opponent[1] {
            self.overtake_lane = Some(c.nearest_lane(self.ego[0]));
        }
        let collided = (self.ego[0] - self.opponent[0]).abs() < c.collision_threshold
            && (self.ego[1] - self.opponent[1]).abs() < c.collision_threshold;
        Ok(StepOutcome {
            next_state: self.observe(),
            reward: if collided { -1.0 } else { 0.0 },
            applied_action: vec![lateral],
            change_flag: None,
        })
    }

    fn end_interaction(&mut self, traj: &InteractionTrajectory) -> Result<()> {
        self.clock.finish(traj)?;
        if self.merged_left_early {
            self.lane = RIGHT;
        } else if let Some(l) = self.overtake_lane {
            self.lane = l;
        }
        Ok(())
    }

    fn true_strategy(&self) -> LatentStrategy {
        LatentStrategy::one_hot(self.lane, 3).expect("lane < 3")
    }

    /// The opponent's intended lane, one-hot.
    fn oracle_observation(&self) -> Vec<f64> {
        self.true_strategy().to_vec()
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

//! Circle point mass: the ego pursues an opponent that sits at a goal on a
//! circle. Ending an interaction strictly inside the circle makes the
//! opponent advance counterclockwise; ending on or outside pins it to the
//! stable (red) goal.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::{check_action, clamp_velocity, distance, Clock, HiPMDPEnv, StepOutcome};
use crate::stability::StabilityMetric;
use crate::types::{InteractionTrajectory, LatentStrategy};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircleConfig {
    pub radius: f64,
    /// Number of equally spaced goals; `None` for a continuum of strategies.
    pub goal_count: Option<usize>,
    /// Counterclockwise advance in the continuous variant, radians.
    pub continuous_step: f64,
    /// Goal 0 sits at this angle and is the stable (red) goal.
    pub red_angle: f64,
    /// Initial goal index (discrete) or initial angle offset in advance steps (continuous).
    pub initial_goal: usize,
    pub start: [f64; 2],
    pub max_speed: f64,
    pub horizon: usize,
    /// Ending outside keeps the current goal instead of snapping to red.
    pub outside_keeps_current: bool,
}

impl CircleConfig {
    pub fn three_goals() -> Self {
        CircleConfig {
            radius: 10.0,
            goal_count: Some(3),
            continuous_step: 1.0,
            red_angle: 0.0,
            initial_goal: 1,
            start: [0.0, 0.0],
            max_speed: 1.0,
            horizon: 50,
            outside_keeps_current: false,
        }
    }

    pub fn eight_goals() -> Self {
        CircleConfig { goal_count: Some(8), ..Self::three_goals() }
    }

    pub fn continuous() -> Self {
        CircleConfig { goal_count: None, ..Self::three_goals() }
    }

    /// Ego starts at 60% radius toward the midpoint of the two non-red goals.
    pub fn unequal() -> Self {
        let base = Self::three_goals();
        let mid = base.red_angle + TAU / 2.0;
        let r = 0.6 * base.radius;
        CircleConfig { start: [r * libm::cos(mid), r * libm::sin(mid)], ..base }
    }

    pub fn goal_position(&self, angle: f64) -> [f64; 2] {
        [self.radius * libm::cos(angle), self.radius * libm::sin(angle)]
    }

    fn index_angle(&self, index: usize, n: usize) -> f64 {
        self.red_angle + TAU * index as f64 / n as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CircleEnv {
    cfg: CircleConfig,
    clock: Clock,
    pos: [f64; 2],
    goal_index: usize,
    angle: f64,
}

impl CircleEnv {
    pub fn new(cfg: CircleConfig) -> Result<Self> {
        if !(cfg.radius > 0.0) || !(cfg.max_speed > 0.0) || cfg.horizon == 0 {
            return Err(Error::invalid("circle radius, speed and horizon must be positive"));
        }
        if let Some(n) = cfg.goal_count {
            if n < 2 || cfg.initial_goal >= n {
                return Err(Error::invalid(format!("bad goal layout: {n} goals, initial {}", cfg.initial_goal)));
            }
        }
        let (goal_index, angle) = match cfg.goal_count {
            Some(n) => (cfg.initial_goal, cfg.index_angle(cfg.initial_goal, n)),
            None => (0, wrap(cfg.red_angle + cfg.initial_goal as f64 * cfg.continuous_step)),
        };
        Ok(CircleEnv { clock: Clock::new(cfg.horizon), pos: cfg.start, goal_index, angle, cfg })
    }

    pub fn config(&self) -> &CircleConfig {
        &self.cfg
    }

    pub fn goal(&self) -> [f64; 2] {
        self.cfg.goal_position(self.angle)
    }

    pub fn goal_index(&self) -> usize {
        self.goal_index
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    fn advance(&mut self) {
        match self.cfg.goal_count {
            Some(n) => {
                self.goal_index = (self.goal_index + 1) % n;
                self.angle = self.cfg.index_angle(self.goal_index, n);
            }
            None => self.angle = wrap(self.angle + self.cfg.continuous_step),
        }
    }

    fn pin_red(&mut self) {
        self.goal_index = 0;
        self.angle = self.cfg.red_angle;
    }
}

fn wrap(angle: f64) -> f64 {
    let a = angle % TAU;
    if a < 0.0 {
        a + TAU
    } else {
        a
    }
}

impl HiPMDPEnv for CircleEnv {
    fn obs_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        2
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
        check_action(action, 2)?;
        self.clock.tick()?;
        let v = clamp_velocity(action, self.cfg.max_speed, self.cfg.max_speed);
        self.pos = [self.pos[0] + v[0], self.pos[1] + v[1]];
        let reward = -distance(&self.pos, &self.goal());
        Ok(StepOutcome { next_state: self.pos.to_vec(), reward, applied_action: v, change_flag: None })
    }

    fn end_interaction(&mut self, traj: &InteractionTrajectory) -> Result<()> {
        self.clock.finish(traj)?;
        let last = traj.final_state().ok_or_else(|| Error::Protocol("empty trajectory".into()))?;
        let r = libm::sqrt(last[0] * last[0] + last[1] * last[1]);
        if r < self.cfg.radius {
            self.advance();
        } else if !self.cfg.outside_keeps_current {
            self.pin_red();
        }
        Ok(())
    }

    fn true_strategy(&self) -> LatentStrategy {
        match self.cfg.goal_count {
            Some(n) => LatentStrategy::one_hot(self.goal_index, n).expect("index < n"),
            None => LatentStrategy::Continuous(self.goal().to_vec()),
        }
    }

    /// The opponent's position.
    fn oracle_observation(&self) -> Vec<f64> {
        self.goal().to_vec()
    }

    fn oracle_dim(&self) -> usize {
        2
    }

    fn strategy_metric(&self) -> StabilityMetric {
        match self.cfg.goal_count {
            Some(_) => StabilityMetric::Discrete,
            None => StabilityMetric::Euclidean,
        }
    }

    fn default_stability(&self) -> StabilityMetric {
        self.strategy_metric()
    }
}

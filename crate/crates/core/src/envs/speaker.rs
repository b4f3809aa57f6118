//! Detour speaker-listener. A stationary speaker names the listener's goal
//! through one of six symbol permutations. Unless the listener visits the
//! speaker, the permutation may be resampled on any step; visiting locks it
//! for the rest of the interaction and all of the next.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_action, clamp_velocity, distance, Clock, HiPMDPEnv, StepOutcome};
use crate::rng::{seeded, SeedRng};
use crate::stability::StabilityMetric;
use crate::types::{InteractionTrajectory, LatentStrategy};
use crate::{Error, Result};

/// Goal index -> symbol index, one row per strategy.
pub const PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpeakerConfig {
    pub half_extent: f64,
    pub landmarks: [[f64; 2]; 3],
    pub speaker: [f64; 2],
    pub speaker_radius: f64,
    /// Per-step resampling probability while unlocked.
    pub change_prob: f64,
    pub max_speed: f64,
    pub start: [f64; 2],
    pub initial_permutation: usize,
    pub horizon: usize,
}

impl Default for SpeakerConfig {
    fn default() -> Self {
        SpeakerConfig {
            half_extent: 1.0,
            landmarks: [[-0.8, 0.6], [-0.8, -0.6], [0.8, -0.6]],
            speaker: [0.9, 0.9],
            speaker_radius: 0.3,
            change_prob: 0.0137,
            max_speed: 0.1,
            start: [0.0, 0.0],
            initial_permutation: 0,
            horizon: 50,
        }
    }
}

fn fresh_rng() -> SeedRng {
    seeded(0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeakerListenerEnv {
    cfg: SpeakerConfig,
    clock: Clock,
    pos: [f64; 2],
    permutation: usize,
    goal: usize,
    locked: bool,
    locked_next: bool,
    #[serde(skip, default = "fresh_rng")]
    rng: SeedRng,
}

impl SpeakerListenerEnv {
    pub fn new(cfg: SpeakerConfig, seed: u64) -> Result<Self> {
        if cfg.initial_permutation >= PERMUTATIONS.len() || cfg.horizon == 0 {
            return Err(Error::invalid("bad speaker-listener configuration"));
        }
        if !(0.0..=1.0).contains(&cfg.change_prob) {
            return Err(Error::invalid("change probability must lie in [0, 1]"));
        }
        Ok(SpeakerListenerEnv {
            clock: Clock::new(cfg.horizon),
            pos: cfg.start,
            permutation: cfg.initial_permutation,
            goal: 0,
            locked: false,
            locked_next: false,
            rng: seeded(seed),
            cfg,
        })
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = seeded(seed);
    }

    pub fn permutation(&self) -> usize {
        self.permutation
    }

    pub fn goal(&self) -> usize {
        self.goal
    }

    fn observe(&self) -> Vec<f64> {
        let mut obs = vec![self.pos[0], self.pos[1], 0.0, 0.0, 0.0];
        obs[2 + PERMUTATIONS[self.permutation][self.goal]] = 1.0;
        obs
    }
}

impl HiPMDPEnv for SpeakerListenerEnv {
    fn obs_dim(&self) -> usize {
        5
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
        self.goal = self.rng.gen_range(0..3);
        self.locked = self.locked_next;
        self.locked_next = false;
        if distance(&self.pos, &self.cfg.speaker) <= self.cfg.speaker_radius {
            self.locked = true;
            self.locked_next = true;
        }
        Ok(self.observe())
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        check_action(action, 2)?;
        self.clock.tick()?;
        let v = clamp_velocity(action, self.cfg.max_speed, self.cfg.max_speed);
        let h = self.cfg.half_extent;
        self.pos = [(self.pos[0] + v[0]).clamp(-h, h), (self.pos[1] + v[1]).clamp(-h, h)];
        if distance(&self.pos, &self.cfg.speaker) <= self.cfg.speaker_radius {
            self.locked = true;
            self.locked_next = true;
        }
        let u: f64 = self.rng.gen();
        let pick = self.rng.gen_range(1..PERMUTATIONS.len());
        let changed = !self.locked && u < self.cfg.change_prob;
        if changed {
            // A resample always lands on a different permutation.
            self.permutation = (self.permutation + pick) % PERMUTATIONS.len();
        }
        let reward = -distance(&self.pos, &self.cfg.landmarks[self.goal]);
        Ok(StepOutcome { next_state: self.observe(), reward, applied_action: v, change_flag: Some(changed) })
    }

    fn end_interaction(&mut self, traj: &InteractionTrajectory) -> Result<()> {
        self.clock.finish(traj)
    }

    fn true_strategy(&self) -> LatentStrategy {
        LatentStrategy::one_hot(self.permutation, PERMUTATIONS.len()).expect("permutation < 6")
    }

    /// The speaker's current permutation, one-hot (not the goal itself).
    fn oracle_observation(&self) -> Vec<f64> {
        self.true_strategy().to_vec()
    }

    fn oracle_dim(&self) -> usize {
        PERMUTATIONS.len()
    }

    fn strategy_metric(&self) -> StabilityMetric {
        StabilityMetric::Partial
    }

    fn default_stability(&self) -> StabilityMetric {
        StabilityMetric::Partial
    }
}

//! Hidden-parameter environments with scripted opponents.
//!
//! Every environment runs in interactions of exactly `H` steps. The opponent
//! strategy is hidden from learners; [`HiPMDPEnv::true_strategy`] exists for
//! the oracle baseline and the metrics recorder only.

mod circle;
mod driving;
mod reach;
mod speaker;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use circle::{CircleConfig, CircleEnv};
pub use driving::{DrivingConfig, DrivingEnv, CENTER, LEFT, RIGHT};
pub use reach::{ReachConfig, ReachEnv};
pub use speaker::{SpeakerConfig, SpeakerListenerEnv, PERMUTATIONS};

use crate::stability::StabilityMetric;
use crate::types::{InteractionTrajectory, LatentStrategy};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// The action after clamping to the environment's limits.
    pub applied_action: Vec<f64>,
    pub change_flag: Option<bool>,
}

pub trait HiPMDPEnv {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Symmetric per-component action bound.
    fn action_bound(&self) -> f64;
    fn horizon(&self) -> usize;
    fn reset_interaction(&mut self) -> Result<Vec<f64>>;
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome>;
    /// Applies the opponent's strategy dynamics after a complete interaction.
    fn end_interaction(&mut self, traj: &InteractionTrajectory) -> Result<()>;
    fn true_strategy(&self) -> LatentStrategy;
    fn oracle_observation(&self) -> Vec<f64>;
    fn oracle_dim(&self) -> usize;
    /// How ground-truth strategies are compared for reporting.
    fn strategy_metric(&self) -> StabilityMetric;
    /// The latent setting a stability-seeking learner uses here by default.
    fn default_stability(&self) -> StabilityMetric;
}

/// Step bookkeeping shared by all environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub(crate) struct Clock {
    horizon: usize,
    t: usize,
    running: bool,
}

impl Clock {
    pub(crate) fn new(horizon: usize) -> Self {
        Clock { horizon, t: 0, running: false }
    }

    pub(crate) fn reset(&mut self) -> Result<()> {
        if self.running && self.t < self.horizon {
            return Err(Error::Protocol(format!("reset after {} of {} steps", self.t, self.horizon)));
        }
        self.t = 0;
        self.running = true;
        Ok(())
    }

    /// Advances and returns the 1-based step number.
    pub(crate) fn tick(&mut self) -> Result<usize> {
        if !self.running {
            return Err(Error::Protocol("step before reset_interaction".into()));
        }
        if self.t >= self.horizon {
            return Err(Error::Protocol(format!("step beyond horizon {}", self.horizon)));
        }
        self.t += 1;
        Ok(self.t)
    }

    pub(crate) fn finish(&mut self, traj: &InteractionTrajectory) -> Result<()> {
        if !self.running || self.t != self.horizon {
            return Err(Error::Protocol(format!("interaction ended after {} of {} steps", self.t, self.horizon)));
        }
        if traj.len() != self.horizon {
            return Err(Error::Protocol(format!(
                "trajectory has {} steps, horizon is {}",
                traj.len(),
                self.horizon
            )));
        }
        self.running = false;
        Ok(())
    }
}

pub(crate) fn check_action(action: &[f64], dim: usize) -> Result<()> {
    if action.len() != dim {
        return Err(Error::invalid(format!("expected {dim}-dim action, got {}", action.len())));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::invalid("non-finite action"));
    }
    Ok(())
}

/// Clamps each component to `±bound`, then rescales to norm at most `max_norm`.
pub(crate) fn clamp_velocity(action: &[f64], bound: f64, max_norm: f64) -> Vec<f64> {
    let mut v: Vec<f64> = action.iter().map(|a| a.clamp(-bound, bound)).collect();
    let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    if n > max_norm {
        for x in &mut v {
            *x *= max_norm / n;
        }
    }
    v
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    crate::types::euclidean(a, b)
}

/// Environment names accepted in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Circle3,
    Circle8,
    CircleContinuous,
    CircleUnequal,
    Driving,
    Reach3d,
    SpeakerListener,
}

impl EnvKind {
    pub const ALL: [EnvKind; 7] = [
        EnvKind::Circle3,
        EnvKind::Circle8,
        EnvKind::CircleContinuous,
        EnvKind::CircleUnequal,
        EnvKind::Driving,
        EnvKind::Reach3d,
        EnvKind::SpeakerListener,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Circle3 => "circle3",
            EnvKind::Circle8 => "circle8",
            EnvKind::CircleContinuous => "circle_continuous",
            EnvKind::CircleUnequal => "circle_unequal",
            EnvKind::Driving => "driving",
            EnvKind::Reach3d => "reach3d",
            EnvKind::SpeakerListener => "speaker_listener",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        EnvKind::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::invalid(format!("unknown environment {name:?}")))
    }
}

/// Per-environment parameter overrides; `None` keeps the variant's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circle: Option<CircleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driving: Option<DrivingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reach: Option<ReachConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker: Option<SpeakerConfig>,
}

/// Closed set of environments, so runs can be configured and snapshotted by value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum AnyEnv {
    Circle(CircleEnv),
    Driving(DrivingEnv),
    Reach(ReachEnv),
    Speaker(SpeakerListenerEnv),
}

impl AnyEnv {
    pub fn build(kind: EnvKind, overrides: &EnvOverrides, seed: u64) -> Result<Self> {
        let circle = |default: CircleConfig| -> Result<AnyEnv> {
            Ok(AnyEnv::Circle(CircleEnv::new(overrides.circle.clone().unwrap_or(default))?))
        };
        match kind {
            EnvKind::Circle3 => circle(CircleConfig::three_goals()),
            EnvKind::Circle8 => circle(CircleConfig::eight_goals()),
            EnvKind::CircleContinuous => circle(CircleConfig::continuous()),
            EnvKind::CircleUnequal => circle(CircleConfig::unequal()),
            EnvKind::Driving => Ok(AnyEnv::Driving(DrivingEnv::new(overrides.driving.clone().unwrap_or_default())?)),
            EnvKind::Reach3d => Ok(AnyEnv::Reach(ReachEnv::new(overrides.reach.clone().unwrap_or_default())?)),
            EnvKind::SpeakerListener => Ok(AnyEnv::Speaker(SpeakerListenerEnv::new(
                overrides.speaker.clone().unwrap_or_default(),
                seed,
            )?)),
        }
    }

    /// Re-seeds any internal randomness (used after restoring a snapshot).
    pub fn reseed(&mut self, seed: u64) {
        if let AnyEnv::Speaker(e) = self {
            e.reseed(seed);
        }
    }

    fn inner(&self) -> &dyn HiPMDPEnv {
        match self {
            AnyEnv::Circle(e) => e,
            AnyEnv::Driving(e) => e,
            AnyEnv::Reach(e) => e,
            AnyEnv::Speaker(e) => e,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn HiPMDPEnv {
        match self {
            AnyEnv::Circle(e) => e,
            AnyEnv::Driving(e) => e,
            AnyEnv::Reach(e) => e,
            AnyEnv::Speaker(e) => e,
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "obs {} / action {} (bound {}) / H {}",
            self.obs_dim(),
            self.action_dim(),
            self.action_bound(),
            self.horizon()
        )
    }
}

impl HiPMDPEnv for AnyEnv {
    fn obs_dim(&self) -> usize {
        self.inner().obs_dim()
    }
    fn action_dim(&self) -> usize {
        self.inner().action_dim()
    }
    fn action_bound(&self) -> f64 {
        self.inner().action_bound()
    }
    fn horizon(&self) -> usize {
        self.inner().horizon()
    }
    fn reset_interaction(&mut self) -> Result<Vec<f64>> {
        self.inner_mut().reset_interaction()
    }
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        self.inner_mut().step(action)
    }
    fn end_interaction(&mut self, traj: &InteractionTrajectory) -> Result<()> {
        self.inner_mut().end_interaction(traj)
    }
    fn true_strategy(&self) -> LatentStrategy {
        self.inner().true_strategy()
    }
    fn oracle_observation(&self) -> Vec<f64> {
        self.inner().oracle_observation()
    }
    fn oracle_dim(&self) -> usize {
        self.inner().oracle_dim()
    }
    fn strategy_metric(&self) -> StabilityMetric {
        self.inner().strategy_metric()
    }
    fn default_stability(&self) -> StabilityMetric {
        self.inner().default_stability()
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    #[test]
    fn names_round_trip() {
        for k in EnvKind::ALL {
            assert_eq!(EnvKind::from_name(k.name()).unwrap(), k);
        }
        assert!(EnvKind::from_name("mujoco").is_err());
    }

    #[test]
    fn protocol_is_enforced_everywhere() {
        for k in EnvKind::ALL {
            let mut env = AnyEnv::build(k, &EnvOverrides::default(), 0).unwrap();
            let zero = alloc::vec![0.0; env.action_dim()];
            assert!(matches!(env.step(&zero), Err(Error::Protocol(_))), "{k:?}");
            let traj = testutil::rollout(&mut env, 1, |_, _| zero.clone());
            assert_eq!(traj.len(), env.horizon());
            // one interaction done; a partial second cannot be ended early
            env.reset_interaction().unwrap();
            env.step(&zero).unwrap();
            assert!(matches!(env.end_interaction(&traj), Err(Error::Protocol(_))), "{k:?}");
            for _ in 1..env.horizon() {
                env.step(&zero).unwrap();
            }
            assert!(matches!(env.step(&zero), Err(Error::Protocol(_))), "{k:?}");
            assert!(env.step(&[0.0; 7]).is_err());
        }
    }

    #[test]
    fn every_env_is_deterministic_for_fixed_seed_and_actions() {
        for k in EnvKind::ALL {
            let run = || {
                let mut env = AnyEnv::build(k, &EnvOverrides::default(), 42).unwrap();
                let mut rng = seeded(5);
                let bound = env.action_bound();
                let dim = env.action_dim();
                let mut out = Vec::new();
                for j in 1..=6 {
                    let traj = testutil::rollout(&mut env, j, |_, _| {
                        (0..dim).map(|_| rng.gen_range(-bound..bound)).collect()
                    });
                    out.push((traj, env.true_strategy()));
                }
                out
            };
            assert_eq!(run(), run(), "{k:?}");
        }
    }

    #[test]
    fn actions_are_clamped_to_bounds() {
        for k in EnvKind::ALL {
            let mut env = AnyEnv::build(k, &EnvOverrides::default(), 1).unwrap();
            let big = alloc::vec![100.0; env.action_dim()];
            let bound = env.action_bound();
            let traj = testutil::rollout(&mut env, 1, |_, _| big.clone());
            for tr in &traj.transitions {
                assert!(tr.action.iter().all(|a| a.abs() <= bound + 1e-12), "{k:?}");
                assert_eq!(tr.state.len(), env.obs_dim());
            }
        }
    }
}

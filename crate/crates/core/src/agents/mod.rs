//! The ego learner and the agent configurations compared against each other.

mod sac;

pub use sac::{ActorCritic, LossRecord, SacBatch, SacConfig, LOG_STD_MAX, LOG_STD_MIN};

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::envs::HiPMDPEnv;
use crate::stability::{StabilityConfig, StabilityMetric};
use crate::types::LatentStrategy;
use crate::{Error, Result};

pub const SMIRL_VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentKind {
    #[serde(rename = "SILI")]
    Sili,
    #[serde(rename = "LILI")]
    Lili,
    #[serde(rename = "SMiRL")]
    Smirl,
    #[serde(rename = "Stable")]
    Stable,
    #[serde(rename = "SAC")]
    Sac,
    #[serde(rename = "Oracle")]
    Oracle,
}

/// What the policy sees besides the environment state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    StateOnly,
    /// `z^j`.
    Current,
    /// `z^j` and `z^{j-1}`.
    Both,
    /// The ground-truth strategy observation.
    Oracle,
}

impl AgentKind {
    pub const ALL: [AgentKind; 6] =
        [AgentKind::Sili, AgentKind::Lili, AgentKind::Smirl, AgentKind::Stable, AgentKind::Sac, AgentKind::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Sili => "SILI",
            AgentKind::Lili => "LILI",
            AgentKind::Smirl => "SMiRL",
            AgentKind::Stable => "Stable",
            AgentKind::Sac => "SAC",
            AgentKind::Oracle => "Oracle",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::invalid(format!("unknown agent kind {name:?}")))
    }

    /// Policy inputs under a given stability setting. In the partial setting
    /// the change flag replaces the learned latents, so SILI and Stable
    /// condition on the state alone.
    pub fn conditioning(self, metric: StabilityMetric) -> Conditioning {
        match (self, metric) {
            (AgentKind::Sili | AgentKind::Stable, StabilityMetric::Partial) => Conditioning::StateOnly,
            (AgentKind::Sili | AgentKind::Stable, _) => Conditioning::Both,
            (AgentKind::Lili, _) => Conditioning::Current,
            (AgentKind::Smirl | AgentKind::Sac, _) => Conditioning::StateOnly,
            (AgentKind::Oracle, _) => Conditioning::Oracle,
        }
    }

    /// The stability configuration this agent actually trains with.
    pub fn effective_stability(self, cfg: &StabilityConfig) -> StabilityConfig {
        match self {
            AgentKind::Sili | AgentKind::Smirl => *cfg,
            AgentKind::Stable => StabilityConfig { beta: 1.0, anneal: None, ..*cfg },
            AgentKind::Lili | AgentKind::Sac | AgentKind::Oracle => {
                StabilityConfig { beta: 0.0, anneal: None, ..*cfg }
            }
        }
    }

    /// Whether a stability term enters the reward at all (with nonzero weight).
    pub fn uses_stability_reward(self) -> bool {
        matches!(self, AgentKind::Sili | AgentKind::Stable)
    }
}

impl Conditioning {
    pub fn uses_latents(self) -> bool {
        matches!(self, Conditioning::Current | Conditioning::Both)
    }

    pub fn extra_dim(self, latent_dim: usize, oracle_dim: usize) -> usize {
        match self {
            Conditioning::StateOnly => 0,
            Conditioning::Current => latent_dim,
            Conditioning::Both => 2 * latent_dim,
            Conditioning::Oracle => oracle_dim,
        }
    }

    /// Concatenates the policy input `(s, conditioning...)`.
    pub fn policy_input(
        self,
        s: &[f64],
        z: &LatentStrategy,
        z_prev: &LatentStrategy,
        oracle: &[f64],
        out: &mut Vec<f64>,
    ) {
        out.extend_from_slice(s);
        match self {
            Conditioning::StateOnly => {}
            Conditioning::Current => out.extend(z.to_vec()),
            Conditioning::Both => {
                out.extend(z.to_vec());
                out.extend(z_prev.to_vec());
            }
            Conditioning::Oracle => out.extend_from_slice(oracle),
        }
    }
}

/// The ground-truth strategy as the Oracle agent observes it.
pub fn oracle_observation<E: HiPMDPEnv + ?Sized>(env: &E) -> LatentStrategy {
    LatentStrategy::Continuous(env.oracle_observation())
}

/// Running per-dimension mean and variance of visited states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmirlDensity {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl SmirlDensity {
    pub fn new(dim: usize) -> Self {
        SmirlDensity { count: 0, mean: alloc::vec![0.0; dim], m2: alloc::vec![0.0; dim] }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> Vec<f64> {
        let n = self.count.max(1) as f64;
        self.m2.iter().map(|m| (m / n).max(SMIRL_VARIANCE_FLOOR)).collect()
    }

    pub fn observe(&mut self, s: &[f64]) -> Result<()> {
        self.check(s)?;
        self.count += 1;
        let n = self.count as f64;
        for ((m, m2), x) in self.mean.iter_mut().zip(&mut self.m2).zip(s) {
            let d = x - *m;
            *m += d / n;
            *m2 += d * (x - *m);
        }
        Ok(())
    }

    fn check(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.mean.len() {
            return Err(Error::invalid(format!("density tracks {} dims, got {}", self.mean.len(), s.len())));
        }
        Ok(())
    }
}

/// Diagonal-Gaussian log-likelihood of `s` under the running state density.
pub fn smirl_reward(density: &SmirlDensity, s: &[f64]) -> Result<f64> {
    density.check(s)?;
    if density.count == 0 {
        return Err(Error::invalid("state density has not observed any state"));
    }
    let var = density.variance();
    Ok(s.iter()
        .zip(&density.mean)
        .zip(&var)
        .map(|((x, m), v)| {
            let d = x - m;
            -0.5 * libm::log(core::f64::consts::TAU * v) - d * d / (2.0 * v)
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{CircleConfig, CircleEnv, DrivingConfig, DrivingEnv, SpeakerConfig, SpeakerListenerEnv};
    use crate::linalg::Matrix;
    use crate::rng::{seeded, standard_normal};
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn kinds_round_trip_by_name() {
        for k in AgentKind::ALL {
            assert_eq!(AgentKind::from_name(k.name()).unwrap(), k);
        }
        assert!(AgentKind::from_name("PPO").is_err());
    }

    #[test]
    fn stable_is_sili_at_full_weight() {
        let cfg = StabilityConfig::new(0.5, StabilityMetric::Discrete).unwrap();
        let stable = AgentKind::Stable.effective_stability(&cfg);
        let sili = AgentKind::Sili.effective_stability(&StabilityConfig { beta: 1.0, ..cfg });
        assert_eq!(stable, sili);
        assert_eq!(
            AgentKind::Stable.conditioning(StabilityMetric::Discrete),
            AgentKind::Sili.conditioning(StabilityMetric::Discrete)
        );
        assert_eq!(AgentKind::Oracle.effective_stability(&cfg).beta, 0.0);
    }

    #[test]
    fn oracle_observations_per_environment() {
        let circle = CircleEnv::new(CircleConfig::three_goals()).unwrap();
        let g = circle.goal();
        assert_eq!(oracle_observation(&circle).to_vec(), g.to_vec());

        let driving = DrivingEnv::new(DrivingConfig::default()).unwrap();
        assert_eq!(oracle_observation(&driving).to_vec(), vec![0.0, 0.0, 1.0]);

        let speaker =
            SpeakerListenerEnv::new(SpeakerConfig { initial_permutation: 4, ..SpeakerConfig::default() }, 0).unwrap();
        assert_eq!(oracle_observation(&speaker).to_vec(), vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn density_tracks_mean_and_variance() {
        let mut d = SmirlDensity::new(2);
        for s in [[1.0, 0.0], [3.0, 0.0], [5.0, 0.0]] {
            d.observe(&s).unwrap();
        }
        assert!((d.mean()[0] - 3.0).abs() < 1e-12);
        assert!((d.variance()[0] - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(d.variance()[1], SMIRL_VARIANCE_FLOOR);
    }

    #[test]
    fn density_gap_after_standard_normal_samples() {
        let mut d = SmirlDensity::new(3);
        let mut rng = seeded(31);
        for _ in 0..1000 {
            let s: Vec<f64> = (0..3).map(|_| standard_normal(&mut rng)).collect();
            d.observe(&s).unwrap();
        }
        let gap = smirl_reward(&d, &[0.0; 3]).unwrap() - smirl_reward(&d, &[3.0; 3]).unwrap();
        let per_dim = gap / 3.0;
        assert!((per_dim - 4.5).abs() <= 0.45, "{per_dim}");
    }

    #[test]
    fn empty_density_is_rejected() {
        assert!(smirl_reward(&SmirlDensity::new(2), &[0.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn reward_peaks_at_mean_and_falls_with_distance(
            pts in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 2), 2..30),
            dir in proptest::collection::vec(-1.0f64..1.0, 2),
            r1 in 0.0f64..3.0,
            dr in 0.01f64..3.0,
        ) {
            let mut d = SmirlDensity::new(2);
            for p in &pts {
                d.observe(p).unwrap();
            }
            let m = d.mean().to_vec();
            let at = |r: f64| {
                let s: Vec<f64> = m.iter().zip(&dir).map(|(mi, di)| mi + r * di).collect();
                smirl_reward(&d, &s).unwrap()
            };
            prop_assert!(at(0.0) >= at(r1));
            if dir.iter().any(|x| x.abs() > 1e-3) {
                prop_assert!(at(r1) >= at(r1 + dr));
            }
        }
    }

    /// Inserts zero input columns after the first `at` inputs of a network.
    fn widen(net: &crate::nn::DenseNet, at: usize, extra: usize) -> crate::nn::DenseNet {
        let mut layers: Vec<(Matrix, Vec<f64>)> = (0..net.num_layers()).map(|l| net.layer(l)).collect();
        let (w, _) = &layers[0];
        let mut wide = Matrix::zeros(w.rows(), w.cols() + extra);
        for r in 0..w.rows() {
            for c in 0..w.cols() {
                let cc = if c < at { c } else { c + extra };
                wide.set(r, cc, w.get(r, c));
            }
        }
        layers[0].0 = wide;
        crate::nn::DenseNet::from_layers(&layers).unwrap()
    }

    #[test]
    fn sili_at_zero_weight_matches_lili_on_constant_latents() {
        let (sd, k, ad) = (2, 3, 2);
        let cfg = SacConfig { hidden: vec![12, 12], ..SacConfig::default() };
        let lili = ActorCritic::new(sd + k, ad, 1.0, &cfg, &mut seeded(40)).unwrap();
        let mut sili = ActorCritic::new(sd + 2 * k, ad, 1.0, &cfg, &mut seeded(41)).unwrap();
        sili.actor = widen(&lili.actor, sd + k, k);
        sili.q1 = widen(&lili.q1, sd + k, k);
        sili.q2 = widen(&lili.q2, sd + k, k);
        sili.q1_target = widen(&lili.q1_target, sd + k, k);
        sili.q2_target = widen(&lili.q2_target, sd + k, k);

        let z = LatentStrategy::one_hot(1, k).unwrap();
        let mut rng = seeded(42);
        let n = 8;
        let rows = |cond: Conditioning| {
            let mut obs = Vec::new();
            let mut next = Vec::new();
            let mut r2 = seeded(43);
            for _ in 0..n {
                let s: Vec<f64> = (0..sd).map(|_| standard_normal(&mut r2)).collect();
                let s2: Vec<f64> = (0..sd).map(|_| standard_normal(&mut r2)).collect();
                cond.policy_input(&s, &z, &z, &[], &mut obs);
                cond.policy_input(&s2, &z, &z, &[], &mut next);
            }
            (obs, next)
        };
        let (lo, ln) = rows(Conditioning::Current);
        let (so, sn) = rows(Conditioning::Both);
        let actions = Matrix::from_vec(n, ad, (0..n * ad).map(|_| 0.5 * standard_normal(&mut rng)).collect());
        let rewards: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let lb = SacBatch {
            obs: Matrix::from_vec(n, sd + k, lo),
            actions: actions.clone(),
            rewards: rewards.clone(),
            next_obs: Matrix::from_vec(n, sd + k, ln),
        };
        let sb = SacBatch {
            obs: Matrix::from_vec(n, sd + 2 * k, so),
            actions,
            rewards,
            next_obs: Matrix::from_vec(n, sd + 2 * k, sn),
        };
        // Same targets, losses and (on shared parameters) gradients.
        let eps = Matrix::from_vec(n, ad, (0..n * ad).map(|_| standard_normal(&mut rng)).collect());
        let lt = lili.critic_targets_with_noise(&lb, &eps).unwrap();
        let st = sili.critic_targets_with_noise(&sb, &eps).unwrap();
        for (x, y) in lt.iter().zip(&st) {
            assert!((x - y).abs() < 1e-10);
        }
        let (lq, _) = lili.critic_loss_and_grads(1, &lb.obs, &lb.actions, &lt).unwrap();
        let (sq, _) = sili.critic_loss_and_grads(1, &sb.obs, &sb.actions, &st).unwrap();
        assert!((lq - sq).abs() < 1e-10, "{lq} vs {sq}");
        let (la, lg, _) = lili.actor_loss_and_grads(&lb.obs, &eps).unwrap();
        let (sa, sg, _) = sili.actor_loss_and_grads(&sb.obs, &eps).unwrap();
        assert!((la - sa).abs() < 1e-10, "{la} vs {sa}");
        // Beyond the first layer's weights the parameter layouts coincide.
        let skip_l = 12 * (sd + k);
        let skip_s = 12 * (sd + 2 * k);
        for (x, y) in lg[skip_l..].iter().zip(&sg[skip_s..]) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}

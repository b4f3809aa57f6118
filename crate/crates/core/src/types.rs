//! Shared domain types: transitions, interaction trajectories, latent
//! strategies and the pairwise stability predicate.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One environment step. Field names on the wire are the short trajectory-log keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    #[serde(rename = "s")]
    pub state: Vec<f64>,
    #[serde(rename = "a")]
    pub action: Vec<f64>,
    #[serde(rename = "r")]
    pub task_reward: f64,
    #[serde(rename = "s2")]
    pub next_state: Vec<f64>,
    /// Whether the opponent changed strategy on this step (partial-observation setting).
    #[serde(rename = "flag", default, skip_serializing_if = "Option::is_none")]
    pub change_flag: Option<bool>,
}

/// The `H` transitions of interaction `index` (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionTrajectory {
    pub index: u64,
    pub transitions: Vec<Transition>,
}

impl InteractionTrajectory {
    pub fn new(index: u64, transitions: Vec<Transition>) -> Result<Self> {
        if index == 0 {
            return Err(Error::invalid("interaction indices start at 1"));
        }
        let traj = InteractionTrajectory { index, transitions };
        traj.check_chain()?;
        Ok(traj)
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    fn check_chain(&self) -> Result<()> {
        for (t, w) in self.transitions.windows(2).enumerate() {
            if w[0].next_state != w[1].state {
                return Err(Error::invalid(format!("trajectory {} breaks the state chain at step {t}", self.index)));
            }
        }
        Ok(())
    }

    /// Checks length and per-step dimensions against an environment's shape.
    pub fn validate(&self, horizon: usize, state_dim: usize, action_dim: usize) -> Result<()> {
        if self.transitions.len() != horizon {
            return Err(Error::invalid(format!(
                "trajectory {} has {} steps, horizon is {horizon}",
                self.index,
                self.transitions.len()
            )));
        }
        for tr in &self.transitions {
            if tr.state.len() != state_dim || tr.next_state.len() != state_dim || tr.action.len() != action_dim {
                return Err(Error::invalid(format!("trajectory {} has mis-shaped transitions", self.index)));
            }
        }
        self.check_chain()
    }

    pub fn final_state(&self) -> Option<&[f64]> {
        self.transitions.last().map(|t| t.next_state.as_slice())
    }

    pub fn task_return(&self) -> f64 {
        self.transitions.iter().map(|t| t.task_reward).sum()
    }

    /// Per-step width of the flattened `(s, a, r, s')` encoding.
    pub fn step_width(state_dim: usize, action_dim: usize) -> usize {
        2 * state_dim + action_dim + 1
    }

    /// Appends the time-ordered `(s, a, r, s')` tuples to `out`.
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for tr in &self.transitions {
            out.extend_from_slice(&tr.state);
            out.extend_from_slice(&tr.action);
            out.push(tr.task_reward);
            out.extend_from_slice(&tr.next_state);
        }
    }
}

/// An opponent strategy, or a prediction of one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LatentStrategy {
    Continuous(Vec<f64>),
    /// One-hot vector.
    Discrete(Vec<f64>),
    ChangeFlag(bool),
}

impl LatentStrategy {
    pub fn one_hot(index: usize, k: usize) -> Result<Self> {
        if index >= k {
            return Err(Error::invalid(format!("one-hot index {index} out of range for k={k}")));
        }
        let mut v = vec![0.0; k];
        v[index] = 1.0;
        Ok(LatentStrategy::Discrete(v))
    }

    pub fn continuous(v: Vec<f64>) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("continuous latent has non-finite components"));
        }
        Ok(LatentStrategy::Continuous(v))
    }

    /// Validates a vector as one-hot.
    pub fn discrete(v: Vec<f64>) -> Result<Self> {
        let ones = v.iter().filter(|&&x| x == 1.0).count();
        let zeros = v.iter().filter(|&&x| x == 0.0).count();
        if ones != 1 || ones + zeros != v.len() {
            return Err(Error::invalid("discrete latent must be exactly one-hot"));
        }
        Ok(LatentStrategy::Discrete(v))
    }

    pub fn dim(&self) -> usize {
        match self {
            LatentStrategy::Continuous(v) | LatentStrategy::Discrete(v) => v.len(),
            LatentStrategy::ChangeFlag(_) => 1,
        }
    }

    pub fn index(&self) -> Option<usize> {
        match self {
            LatentStrategy::Discrete(v) => v.iter().position(|&x| x == 1.0),
            _ => None,
        }
    }

    /// Numeric view fed to networks (a change flag becomes `[0]` or `[1]`).
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            LatentStrategy::Continuous(v) | LatentStrategy::Discrete(v) => v.clone(),
            LatentStrategy::ChangeFlag(f) => vec![if *f { 1.0 } else { 0.0 }],
        }
    }

    fn same_shape(&self, other: &LatentStrategy) -> Result<()> {
        let same_variant = core::mem::discriminant(self) == core::mem::discriminant(other);
        if !same_variant || self.dim() != other.dim() {
            return Err(Error::invalid("latent strategies differ in variant or dimension"));
        }
        Ok(())
    }
}

/// Distance functions over latent strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    /// 0 when equal, 1 otherwise.
    Discrete,
}

impl Metric {
    pub fn distance(self, a: &LatentStrategy, b: &LatentStrategy) -> Result<f64> {
        a.same_shape(b)?;
        match self {
            Metric::Discrete => Ok(if a == b { 0.0 } else { 1.0 }),
            Metric::Euclidean => match (a, b) {
                (LatentStrategy::ChangeFlag(_), _) => {
                    Err(Error::invalid("euclidean distance is undefined for change flags"))
                }
                _ => Ok(euclidean(&a.to_vec(), &b.to_vec())),
            },
        }
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// True iff `d(z, z_prev) < eps` (strict).
pub fn pairwise_stable(z: &LatentStrategy, z_prev: &LatentStrategy, metric: Metric, eps: f64) -> Result<bool> {
    if !(eps > 0.0) {
        return Err(Error::invalid("eps must be positive"));
    }
    Ok(metric.distance(z, z_prev)? < eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn step(s: f64, s2: f64) -> Transition {
        Transition { state: vec![s], action: vec![0.0], task_reward: 0.0, next_state: vec![s2], change_flag: None }
    }

    #[test]
    fn stable_examples() {
        let z = LatentStrategy::continuous(vec![0.0, 0.0]).unwrap();
        let zp = LatentStrategy::continuous(vec![3.0, 4.0]).unwrap();
        assert!(pairwise_stable(&z, &z, Metric::Euclidean, 0.1).unwrap());
        assert!(!pairwise_stable(&z, &zp, Metric::Euclidean, 5.0).unwrap());
        assert!(pairwise_stable(&z, &zp, Metric::Euclidean, 5.000001).unwrap());
        let e1 = LatentStrategy::one_hot(0, 3).unwrap();
        let e2 = LatentStrategy::one_hot(1, 3).unwrap();
        assert!(!pairwise_stable(&e1, &e2, Metric::Discrete, 0.5).unwrap());
        assert!(pairwise_stable(&e1, &e1, Metric::Discrete, 0.1).unwrap());
        let f = LatentStrategy::ChangeFlag(true);
        assert!(pairwise_stable(&f, &f, Metric::Discrete, 0.1).unwrap());
    }

    #[test]
    fn stable_rejects_mismatch() {
        let e1 = LatentStrategy::one_hot(0, 3).unwrap();
        let e4 = LatentStrategy::one_hot(0, 4).unwrap();
        let c = LatentStrategy::continuous(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(pairwise_stable(&e1, &e4, Metric::Discrete, 0.5).is_err());
        assert!(pairwise_stable(&e1, &c, Metric::Euclidean, 0.5).is_err());
        assert!(pairwise_stable(&e1, &e1, Metric::Discrete, 0.0).is_err());
    }

    #[test]
    fn one_hot_validation() {
        assert!(LatentStrategy::discrete(vec![0.0, 1.0, 0.0]).is_ok());
        assert!(LatentStrategy::discrete(vec![0.0, 1.0, 1.0]).is_err());
        assert!(LatentStrategy::discrete(vec![0.0, 0.5, 0.0]).is_err());
        assert!(LatentStrategy::one_hot(3, 3).is_err());
        assert!(LatentStrategy::continuous(vec![f64::NAN]).is_err());
        assert_eq!(LatentStrategy::one_hot(2, 4).unwrap().index(), Some(2));
    }

    #[test]
    fn trajectory_chain_is_enforced() {
        assert!(InteractionTrajectory::new(1, vec![step(0.0, 1.0), step(1.0, 2.0)]).is_ok());
        assert!(InteractionTrajectory::new(1, vec![step(0.0, 1.0), step(1.5, 2.0)]).is_err());
        assert!(InteractionTrajectory::new(0, vec![]).is_err());
        let t = InteractionTrajectory::new(3, vec![step(0.0, 1.0), step(1.0, 2.0)]).unwrap();
        assert!(t.validate(2, 1, 1).is_ok());
        assert!(t.validate(3, 1, 1).is_err());
        assert!(t.validate(2, 2, 1).is_err());
        let mut flat = Vec::new();
        t.flatten_into(&mut flat);
        assert_eq!(flat, vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 2.0]);
        assert_eq!(flat.len(), 2 * InteractionTrajectory::step_width(1, 1));
    }

    proptest! {
        #[test]
        fn stability_is_symmetric_and_reflexive(
            a in proptest::collection::vec(-10.0f64..10.0, 3),
            b in proptest::collection::vec(-10.0f64..10.0, 3),
            eps in 1e-6f64..20.0,
        ) {
            let za = LatentStrategy::continuous(a).unwrap();
            let zb = LatentStrategy::continuous(b).unwrap();
            prop_assert_eq!(
                pairwise_stable(&za, &zb, Metric::Euclidean, eps).unwrap(),
                pairwise_stable(&zb, &za, Metric::Euclidean, eps).unwrap()
            );
            prop_assert!(pairwise_stable(&za, &za, Metric::Euclidean, eps).unwrap());
        }
    }
}

//! Synthetic datasets with known ground truth, used as regression oracles.

use alloc::vec::Vec;

use rand::Rng;

use crate::envs::{CircleConfig, CircleEnv, HiPMDPEnv};
use crate::replay::ReplayBuffer;
use crate::rng::seeded;
use crate::types::{InteractionTrajectory, Transition};
use crate::Result;

/// Interactions plus the ground-truth strategy index active in each.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub trajectories: Vec<InteractionTrajectory>,
    pub strategies: Vec<usize>,
}

impl Fixture {
    pub fn buffer(&self) -> Result<ReplayBuffer> {
        let mut buf = ReplayBuffer::new(self.trajectories.len().max(1), 0)?;
        for t in &self.trajectories {
            buf.push(t.clone())?;
        }
        Ok(buf)
    }
}

/// Circle (3 goals) with an ego that takes uniformly random velocities.
pub fn circle_random_walk(interactions: usize, seed: u64) -> Result<Fixture> {
    let mut env = CircleEnv::new(CircleConfig::three_goals())?;
    let mut rng = seeded(seed);
    let (h, bound) = (env.horizon(), env.action_bound());
    let mut fixture = Fixture { trajectories: Vec::new(), strategies: Vec::new() };
    for j in 1..=interactions {
        let mut s = env.reset_interaction()?;
        fixture.strategies.push(env.goal_index());
        let mut transitions = Vec::with_capacity(h);
        for _ in 0..h {
            let a: Vec<f64> = (0..2).map(|_| rng.gen_range(-bound..=bound)).collect();
            let out = env.step(&a)?;
            transitions.push(Transition {
                state: s,
                action: a,
                task_reward: out.reward,
                next_state: out.next_state.clone(),
                change_flag: None,
            });
            s = out.next_state;
        }
        let traj = InteractionTrajectory::new(j as u64, transitions)?;
        env.end_interaction(&traj)?;
        fixture.trajectories.push(traj);
    }
    Ok(fixture)
}

/// Fraction of items whose cluster's majority label matches their own.
pub fn cluster_purity(clusters: &[usize], labels: &[usize]) -> f64 {
    assert_eq!(clusters.len(), labels.len());
    if clusters.is_empty() {
        return 1.0;
    }
    let kc = clusters.iter().max().unwrap() + 1;
    let kl = labels.iter().max().unwrap() + 1;
    let mut counts = alloc::vec![0usize; kc * kl];
    for (&c, &l) in clusters.iter().zip(labels) {
        counts[c * kl + l] += 1;
    }
    let majority: usize = counts.chunks(kl).map(|row| row.iter().copied().max().unwrap_or(0)).sum();
    majority as f64 / clusters.len() as f64
}

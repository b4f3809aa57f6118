//! Storage of whole interactions so consecutive pairs stay recoverable.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::types::InteractionTrajectory;
use crate::{Error, Result};

pub const DEFAULT_CAPACITY: usize = 2000;

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    interactions: VecDeque<InteractionTrajectory>,
    rng_seed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, rng_seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("replay capacity must be positive"));
        }
        Ok(ReplayBuffer { capacity, interactions: VecDeque::with_capacity(capacity.min(4096)), rng_seed })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    /// Appends an interaction, evicting the oldest when full. Indices must increase.
    pub fn push(&mut self, traj: InteractionTrajectory) -> Result<()> {
        if let Some(last) = self.interactions.back() {
            if traj.index <= last.index {
                return Err(Error::invalid(format!(
                    "interaction {} pushed after {}",
                    traj.index, last.index
                )));
            }
        }
        if self.interactions.len() == self.capacity {
            self.interactions.pop_front();
        }
        self.interactions.push_back(traj);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &InteractionTrajectory> {
        self.interactions.iter()
    }

    pub fn oldest_index(&self) -> Option<u64> {
        self.interactions.front().map(|t| t.index)
    }

    pub fn latest(&self) -> Option<&InteractionTrajectory> {
        self.interactions.back()
    }

    /// Looks up a stored interaction by its index.
    pub fn get(&self, index: u64) -> Option<&InteractionTrajectory> {
        let first = self.oldest_index()?;
        let pos = index.checked_sub(first)? as usize;
        // Indices are increasing; when contiguous the offset is exact.
        match self.interactions.get(pos) {
            Some(t) if t.index == index => Some(t),
            _ => self.interactions.iter().find(|t| t.index == index),
        }
    }

    /// Positions `p` such that entries `p - 1` and `p` have consecutive indices.
    pub fn pair_positions(&self) -> Vec<usize> {
        (1..self.interactions.len())
            .filter(|&p| self.interactions[p].index == self.interactions[p - 1].index + 1)
            .collect()
    }

    pub fn at(&self, position: usize) -> &InteractionTrajectory {
        &self.interactions[position]
    }

    /// Uniform draws with replacement among stored `(tau_{j-1}, tau_j)` pairs.
    pub fn sample_consecutive_pairs<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<(&InteractionTrajectory, &InteractionTrajectory)>> {
        let valid = self.pair_positions();
        if valid.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        Ok((0..batch_size)
            .map(|_| {
                let p = valid[rng.gen_range(0..valid.len())];
                (&self.interactions[p - 1], &self.interactions[p])
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::types::Transition;
    use alloc::vec;

    fn traj(index: u64) -> InteractionTrajectory {
        let tr = Transition {
            state: vec![index as f64],
            action: vec![0.0],
            task_reward: 0.0,
            next_state: vec![index as f64],
            change_flag: None,
        };
        InteractionTrajectory::new(index, vec![tr]).unwrap()
    }

    fn filled(cap: usize, n: u64) -> ReplayBuffer {
        let mut b = ReplayBuffer::new(cap, 0).unwrap();
        for j in 1..=n {
            b.push(traj(j)).unwrap();
        }
        b
    }

    #[test]
    fn pairs_come_from_consecutive_interactions() {
        let b = filled(10, 3);
        let pairs = b.sample_consecutive_pairs(4, &mut seeded(1)).unwrap();
        assert_eq!(pairs.len(), 4);
        for (prev, cur) in pairs {
            assert!(matches!((prev.index, cur.index), (1, 2) | (2, 3)));
        }
    }

    #[test]
    fn single_interaction_has_no_pair() {
        let b = filled(10, 1);
        assert_eq!(b.sample_consecutive_pairs(1, &mut seeded(1)).unwrap_err(), Error::EmptyBuffer);
    }

    #[test]
    fn eviction_drops_oldest() {
        let b = filled(3, 5);
        let idx: Vec<u64> = b.iter().map(|t| t.index).collect();
        assert_eq!(idx, vec![3, 4, 5]);
        assert!(b.get(2).is_none());
        assert_eq!(b.get(4).unwrap().index, 4);
        let pairs = b.sample_consecutive_pairs(50, &mut seeded(2)).unwrap();
        assert!(pairs.iter().all(|(p, c)| matches!((p.index, c.index), (3, 4) | (4, 5))));
        assert!(pairs.iter().any(|(p, _)| p.index == 3));
        assert!(pairs.iter().any(|(p, _)| p.index == 4));
    }

    #[test]
    fn gaps_are_not_pairs() {
        let mut b = ReplayBuffer::new(10, 0).unwrap();
        b.push(traj(1)).unwrap();
        b.push(traj(3)).unwrap();
        assert_eq!(b.sample_consecutive_pairs(1, &mut seeded(0)).unwrap_err(), Error::EmptyBuffer);
        assert!(b.push(traj(2)).is_err());
        assert_eq!(b.get(3).unwrap().index, 3);
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let b = filled(10, 8);
        let draw = |seed| -> Vec<u64> {
            b.sample_consecutive_pairs(20, &mut seeded(seed)).unwrap().iter().map(|(p, _)| p.index).collect()
        };
        assert_eq!(draw(7), draw(7));
    }
}

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Trajectory;
use crate::risk::BetaParam;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub betas: Vec<BetaParam>,
    /// Grid point whose policy collected the trajectory.
    pub grid: usize,
    pub trajectory: Trajectory,
}

/// FIFO store of (β, trajectory) pairs bounded by the total step count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    steps: usize,
    entries: VecDeque<BufferEntry>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            steps: 0,
            entries: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Stored environment steps.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn push(&mut self, entry: BufferEntry) {
        self.steps += entry.trajectory.steps.len();
        self.entries.push_back(entry);
        // Keep at least the newest entry even if it alone exceeds capacity.
        while self.steps > self.capacity && self.entries.len() > 1 {
            let old = self.entries.pop_front().expect("non-empty");
            self.steps -= old.trajectory.steps.len();
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<&BufferEntry> {
        if self.entries.is_empty() {
            return None;
        }
        self.entries.get(rng.gen_range(0..self.entries.len()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &BufferEntry> {
        self.entries.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Step;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn entry(tag: usize, len: usize) -> BufferEntry {
        let step = Step {
            state: tag,
            action: 0,
            reward: 0.0,
            costs: vec![],
        };
        BufferEntry {
            betas: vec![],
            grid: tag,
            trajectory: Trajectory {
                steps: vec![step; len],
                terminal: 0,
            },
        }
    }

    #[test]
    fn evicts_oldest_first() {
        let mut b = ReplayBuffer::new(10);
        for tag in 0..5 {
            b.push(entry(tag, 4));
        }
        assert_eq!(b.steps(), 8);
        let tags: Vec<usize> = b.iter().map(|e| e.grid).collect();
        assert_eq!(tags, vec![3, 4]);
    }

    #[test]
    fn sampling_is_seeded_and_uniform() {
        let mut b = ReplayBuffer::new(100);
        for tag in 0..4 {
            b.push(entry(tag, 1));
        }
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| b.sample(&mut rng).unwrap().grid).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut counts = [0usize; 4];
        for _ in 0..40_000 {
            counts[b.sample(&mut rng).unwrap().grid] += 1;
        }
        assert!(counts.iter().all(|&c| (c as f64 - 10_000.0).abs() < 400.0));
        assert!(ReplayBuffer::new(5).sample(&mut rng).is_none());
    }
}

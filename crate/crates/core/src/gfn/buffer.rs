use std::collections::VecDeque;

use rand::Rng;

use crate::dag::Trajectory;

/// A sampled trajectory with the true reward of its terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct BufferEntry {
    pub trajectory: Trajectory,
    pub reward: f64,
}

/// FIFO replay buffer; the oldest entry is evicted when full.
#[derive(Debug, Clone, Default)]
pub struct ReplayBuffer {
    entries: VecDeque<BufferEntry>,
    capacity: Option<usize>,
}

impl ReplayBuffer {
    /// `None` means unbounded.
    pub fn new(capacity: Option<usize>) -> Self {
        Self {
            entries: VecDeque::new(),
            capacity,
        }
    }

    pub fn push(&mut self, entry: BufferEntry) {
        if self.capacity == Some(0) {
            return;
        }
        if let Some(cap) = self.capacity {
            while self.entries.len() >= cap {
                self.entries.pop_front();
            }
        }
        self.entries.push_back(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&BufferEntry> {
        self.entries.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &BufferEntry> + '_ {
        self.entries.iter()
    }

    /// Uniform draw with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<&BufferEntry> {
        if self.entries.is_empty() {
            None
        } else {
            self.entries.get(rng.gen_range(0..self.entries.len()))
        }
    }
}

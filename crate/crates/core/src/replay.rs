//! Fixed-capacity FIFO replay memory with uniform sampling.

use crate::envs::Obs;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// One stored experience. `done` is set only for true terminals, so a
/// transition cut by the step limit can still bootstrap from `s_next`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: Obs,
    pub a: usize,
    pub r: f64,
    pub s_next: Obs,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    /// Slot the next push writes to once the buffer is full.
    head: usize,
    insert_count: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            storage: Vec::with_capacity(capacity.min(1 << 20)),
            head: 0,
            insert_count: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn insert_count(&self) -> u64 {
        self.insert_count
    }

    /// Appends `t`, evicting the oldest transition when full.
    pub fn push(&mut self, t: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
        self.insert_count += 1;
    }

    /// Stored transitions from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.storage.split_at(self.head);
        older.iter().chain(newer)
    }

    /// Uniform indices with replacement, in draw order. Each draw is one
    /// `Rng::below(len)` call.
    pub fn sample_indices(&self, batch_size: usize, rng: &mut Rng) -> Result<Vec<usize>> {
        if batch_size == 0 || self.len() < batch_size {
            return Err(Error::Usage(format!(
                "cannot sample {batch_size} transitions from a buffer holding {}",
                self.len()
            )));
        }
        Ok((0..batch_size).map(|_| rng.below(self.len())).collect())
    }

    pub fn sample(&self, batch_size: usize, rng: &mut Rng) -> Result<Vec<Transition>> {
        Ok(self
            .sample_indices(batch_size, rng)?
            .into_iter()
            .map(|i| self.storage[i])
            .collect())
    }
}

use std::sync::Arc;

use parking_lot::RwLock;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::state::{StateVec, ALLY_ACTION_DIM, OPPONENT_ACTION_DIM};

pub const DEFAULT_CAPACITY: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub s: StateVec,
    pub a_ally: [f64; ALLY_ACTION_DIM],
    pub a_opponent: [f64; OPPONENT_ACTION_DIM],
    pub r_ally: f64,
    pub r_opponent: f64,
    pub s_next: StateVec,
}

/// Fixed-capacity ring of transitions; once full, each push evicts the oldest.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T = TransitionRecord> {
    capacity: usize,
    items: Vec<T>,
    // slot the next push overwrites once full
    head: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.head] = item;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        let (newer, older) = self.items.split_at(self.head);
        older.iter().chain(newer.iter())
    }

    /// Uniform draw of `batch` distinct records; `None` while fewer are stored.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Option<Vec<&T>> {
        if batch > self.items.len() {
            return None;
        }
        Some(
            rand::seq::index::sample(rng, self.items.len(), batch)
                .into_iter()
                .map(|i| &self.items[i])
                .collect(),
        )
    }
}

/// Thread-safe buffer: any number of rollout workers may push while a single
/// trainer samples. A record is visible to every sample taken after its push
/// returns.
#[derive(Clone, Debug)]
pub struct SharedReplayBuffer<T = TransitionRecord> {
    inner: Arc<RwLock<ReplayBuffer<T>>>,
}

impl<T: Clone> SharedReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            inner: Arc::new(RwLock::new(ReplayBuffer::new(capacity))),
        }
    }

    pub fn push(&self, item: T) {
        self.inner.write().push(item);
    }

    pub fn len(&self) -> usize {
        self.inner.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.read().is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Option<Vec<T>> {
        let guard = self.inner.read();
        guard.sample(batch, rng).map(|v| v.into_iter().cloned().collect())
    }
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{SacError, Transition};

/// Fixed-capacity ring buffer of joint transitions.
///
/// Critic updates may start once `initial_size` transitions are stored;
/// actor and temperature updates wait for `warmup` transitions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    initial_size: usize,
    warmup: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub const DEFAULT_CAPACITY: usize = 1_000_000;
    pub const DEFAULT_INITIAL_SIZE: usize = 3_000;
    pub const DEFAULT_WARMUP: usize = 5_000;

    pub fn new(capacity: usize, initial_size: usize, warmup: usize) -> Result<Self, SacError> {
        if capacity == 0 {
            return Err(SacError::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            initial_size,
            warmup,
            items: Vec::new(),
            next: 0,
        })
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn ready_for_critic(&self) -> bool {
        !self.items.is_empty() && self.items.len() >= self.initial_size
    }

    pub fn ready_for_actor(&self) -> bool {
        self.ready_for_critic() && self.items.len() >= self.warmup
    }

    /// Uniform sample of distinct transitions.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<&Transition>, SacError> {
        if !self.ready_for_critic() {
            return Err(SacError::NotReady {
                len: self.items.len(),
                required: self.initial_size.max(1),
            });
        }
        let amount = batch_size.min(self.items.len());
        Ok(rand::seq::index::sample(rng, self.items.len(), amount)
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }
}

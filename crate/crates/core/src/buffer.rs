//! FIFO store of evaluation trajectories used as crossover targets.
//!
//! Trajectories are kept whole, with their rewards replaced by
//! rewards-to-go. Capacity is configured in transitions and divided by the
//! horizon to get the number of trajectory slots.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::EliteRecord;
use crate::env::Rollout;
use crate::policy::{PolicySpec, Tape};
use crate::variation::rewards_to_go;

#[derive(Debug, Error, PartialEq)]
pub enum BufferError {
    #[error("cannot sample from an empty buffer")]
    Empty,
    #[error("trajectory horizon {got} does not match buffer horizon {expected}")]
    Horizon { expected: usize, got: usize },
    #[error("buffer capacity must hold at least one trajectory")]
    ZeroCapacity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `s_0 .. s_{H-1}`, row-major.
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards_to_go: Vec<f64>,
    pub source_iteration: u64,
}

impl Trajectory {
    /// Copy states and actions of `rollout`, replacing its rewards with
    /// discounted rewards-to-go.
    pub fn from_rollout(rollout: &Rollout, gamma: f64, source_iteration: u64) -> Self {
        Trajectory {
            states: rollout.states.clone(),
            actions: rollout.actions.clone(),
            rewards_to_go: rewards_to_go(&rollout.rewards, gamma),
            source_iteration,
        }
    }

    /// Target built from an archive elite. Elites keep no actions, so they
    /// are recomputed with one forward pass per stored state.
    pub fn from_elite(elite: &EliteRecord, spec: &PolicySpec) -> Self {
        let mut tape = Tape::new(spec);
        let mut actions = Vec::with_capacity(elite.horizon() * spec.action_dim);
        for s in elite.states.chunks_exact(spec.state_dim) {
            actions.extend_from_slice(spec.forward_into(elite.genotype.as_slice(), s, &mut tape));
        }
        Trajectory {
            states: elite.states.clone(),
            actions,
            rewards_to_go: elite.rewards_to_go.clone(),
            source_iteration: elite.birth_iteration,
        }
    }

    pub fn horizon(&self) -> usize {
        self.rewards_to_go.len()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceMode {
    /// Targets are sampled from recent evaluations.
    #[default]
    Buffer,
    /// Targets are built from archive elites.
    Archive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BufferConfig {
    pub capacity_transitions: usize,
    pub source_mode: SourceMode,
}

impl Default for BufferConfig {
    fn default() -> Self {
        BufferConfig {
            capacity_transitions: 1_024_000,
            source_mode: SourceMode::Buffer,
        }
    }
}

impl BufferConfig {
    pub fn source_mode(&self) -> SourceMode {
        self.source_mode
    }

    pub fn capacity_trajectories(&self, horizon: usize) -> usize {
        self.capacity_transitions / horizon.max(1)
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    ring: Vec<Arc<Trajectory>>,
    capacity: usize,
    cursor: usize,
    horizon: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, horizon: usize) -> Result<Self, BufferError> {
        if capacity == 0 {
            return Err(BufferError::ZeroCapacity);
        }
        Ok(ReplayBuffer {
            ring: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            cursor: 0,
            horizon,
            inserted: 0,
        })
    }

    pub fn from_config(cfg: &BufferConfig, horizon: usize) -> Result<Self, BufferError> {
        Self::new(cfg.capacity_trajectories(horizon), horizon)
    }

    pub fn insert(&mut self, t: Trajectory) -> Result<(), BufferError> {
        if t.horizon() != self.horizon {
            return Err(BufferError::Horizon {
                expected: self.horizon,
                got: t.horizon(),
            });
        }
        let t = Arc::new(t);
        if self.ring.len() < self.capacity {
            self.ring.push(t);
        } else {
            self.ring[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        self.inserted += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total_inserted(&self) -> u64 {
        self.inserted
    }

    /// Uniform with replacement.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<Arc<Trajectory>>, BufferError> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Arc<Trajectory>, BufferError> {
        if self.ring.is_empty() {
            return Err(BufferError::Empty);
        }
        Ok(Arc::clone(&self.ring[rng.random_range(0..self.ring.len())]))
    }

    /// Contents from oldest to newest.
    pub fn iter_fifo(&self) -> impl Iterator<Item = &Trajectory> {
        let split = if self.ring.len() < self.capacity {
            0
        } else {
            self.cursor
        };
        self.ring[split..]
            .iter()
            .chain(&self.ring[..split])
            .map(Arc::as_ref)
    }
}

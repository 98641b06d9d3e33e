//! Quality-diversity neuroevolution of deterministic MLP policies.
//!
//! A CVT MAP-Elites loop mutates half of every batch with Iso+LineDD in
//! parameter space and the other half with an action-sequence crossover
//! operator that interpolates towards trajectories from a replay buffer,
//! weighted per time step by rewards-to-go, state similarity and action
//! similarity, and maps the change back to parameters with the policy's
//! vector-Jacobian product. No critic is trained.
//!
//! Start with [`scheduler::run`] and the runnable programs in `examples/`.

pub mod archive;
pub mod bench;
pub mod buffer;
pub mod config;
pub mod env;
pub mod policy;
pub mod rng;
pub mod scheduler;
pub mod variation;

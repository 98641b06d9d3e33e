//! One-dimensional walker with two legs and an internal clock.
//!
//! State is `[v, sin(phase), cos(phase)]`. A leg is in contact on a step
//! when the magnitude of its action exceeds `contact_threshold`; legs in
//! contact push forward with the magnitude of their (clipped) action:
//!
//! ```text
//! v'     = (1 - drag) * v + dt * push * sum_i [|a_i| > thr] * |a_i|
//! phase' = phase + dt * clock
//! r      = forward * v' + survival - energy * |a|^2
//! ```
//!
//! Velocity never goes negative, so `survival >= 2 * energy` keeps every
//! reward non-negative. The descriptor is the per-leg contact rate.

use serde::{Deserialize, Serialize};

use super::{check_common, clip_action, squared_norm_clipped, EnvError, EnvSpec, Environment};

pub const LEGS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaitParams {
    pub horizon: usize,
    pub init_noise_std: f64,
    pub dt: f64,
    pub push: f64,
    pub drag: f64,
    pub clock: f64,
    pub contact_threshold: f64,
    pub forward: f64,
    pub survival: f64,
    pub energy: f64,
}

impl Default for GaitParams {
    fn default() -> Self {
        Self {
            horizon: 100,
            init_noise_std: 0.01,
            dt: 0.1,
            push: 1.0,
            drag: 0.2,
            clock: 2.0,
            contact_threshold: 0.5,
            forward: 1.0,
            survival: 1.0,
            energy: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GaitUni {
    params: GaitParams,
    spec: EnvSpec,
}

impl GaitUni {
    pub fn new(params: GaitParams) -> Result<Self, EnvError> {
        check_common(params.horizon, params.init_noise_std)?;
        if !(0.0..=1.0).contains(&params.drag) || params.push < 0.0 || params.forward < 0.0 {
            return Err(EnvError::InvalidParams(
                "drag in [0, 1], push and forward non-negative".into(),
            ));
        }
        if params.energy < 0.0 || params.survival < LEGS as f64 * params.energy {
            return Err(EnvError::InvalidParams(
                "survival must cover the maximal energy penalty".into(),
            ));
        }
        let spec = EnvSpec {
            name: "gait_uni".into(),
            state_dim: 3,
            action_dim: LEGS,
            horizon: params.horizon,
            descriptor_dim: LEGS,
            descriptor_bounds: vec![(0.0, 1.0); LEGS],
            init_noise_std: params.init_noise_std,
        };
        Ok(Self { params, spec })
    }
}

/// Fraction of steps in which `|a_i|` exceeds `threshold`, per channel.
pub fn contact_rates(actions: &[f64], action_dim: usize, threshold: f64) -> Vec<f64> {
    let steps = actions.len() / action_dim;
    let mut counts = vec![0usize; action_dim];
    for row in actions.chunks_exact(action_dim) {
        for (c, a) in counts.iter_mut().zip(row) {
            if a.abs() > threshold {
                *c += 1;
            }
        }
    }
    counts
        .into_iter()
        .map(|c| c as f64 / steps.max(1) as f64)
        .collect()
}

impl Environment for GaitUni {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn nominal_state(&self) -> Vec<f64> {
        vec![0.0, 0.0, 1.0]
    }

    fn step(&self, state: &[f64], action: &[f64], next: &mut [f64]) -> f64 {
        let p = &self.params;
        let thrust: f64 = action
            .iter()
            .map(|&a| clip_action(a).abs())
            .filter(|&m| m > p.contact_threshold)
            .sum();
        let v = ((1.0 - p.drag) * state[0] + p.dt * p.push * thrust).max(0.0);
        let phase = state[1].atan2(state[2]) + p.dt * p.clock;
        next[0] = v;
        next[1] = phase.sin();
        next[2] = phase.cos();
        p.forward * v + p.survival - p.energy * squared_norm_clipped(action)
    }

    fn raw_descriptor(&self, _states: &[f64], actions: &[f64]) -> Vec<f64> {
        contact_rates(actions, LEGS, self.params.contact_threshold)
    }
}

//! Planar arm with `k` torque-driven links.
//!
//! Each link angle is measured in the world frame and driven by its own
//! torque, so state is `[theta_1..theta_k, omega_1..omega_k]`. One step,
//! with `a` the clipped action:
//!
//! ```text
//! omega' = (1 - damping) * omega + dt * gain * a
//! theta' = theta + dt * omega'
//! r      = survival - energy * |a|^2
//! ```
//!
//! The end effector sits at `sum_i link * (cos theta_i, sin theta_i)` with
//! `link = reach / k`, so the reachable workspace is the disc of radius
//! `reach`.

use serde::{Deserialize, Serialize};

use super::{check_common, clip_action, squared_norm_clipped, EnvError, EnvSpec, Environment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmParams {
    pub horizon: usize,
    pub init_noise_std: f64,
    pub joints: usize,
    pub reach: f64,
    pub dt: f64,
    pub gain: f64,
    pub damping: f64,
    pub survival: f64,
    /// Per-joint energy weight; `survival >= joints * energy` is required.
    pub energy: f64,
}

impl Default for ArmParams {
    fn default() -> Self {
        Self {
            horizon: 100,
            init_noise_std: 0.01,
            joints: 3,
            reach: 1.0,
            dt: 0.1,
            gain: 1.0,
            damping: 0.1,
            survival: 1.0,
            energy: 1.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ArmOmni {
    params: ArmParams,
    spec: EnvSpec,
}

impl ArmOmni {
    pub fn new(params: ArmParams) -> Result<Self, EnvError> {
        check_common(params.horizon, params.init_noise_std)?;
        if params.joints == 0 || !(params.reach > 0.0) || !(params.dt > 0.0) {
            return Err(EnvError::InvalidParams(
                "joints, reach and dt must be positive".into(),
            ));
        }
        if params.energy < 0.0 || params.survival < params.joints as f64 * params.energy - 1e-12 {
            return Err(EnvError::InvalidParams(
                "survival must cover the maximal energy penalty".into(),
            ));
        }
        let spec = EnvSpec {
            name: "arm_omni".into(),
            state_dim: 2 * params.joints,
            action_dim: params.joints,
            horizon: params.horizon,
            descriptor_dim: 2,
            descriptor_bounds: vec![(-params.reach, params.reach); 2],
            init_noise_std: params.init_noise_std,
        };
        Ok(Self { params, spec })
    }

    pub fn end_effector(&self, angles: &[f64]) -> (f64, f64) {
        let link = self.params.reach / self.params.joints as f64;
        angles.iter().fold((0.0, 0.0), |(x, y), th| {
            (x + link * th.cos(), y + link * th.sin())
        })
    }
}

impl Environment for ArmOmni {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn nominal_state(&self) -> Vec<f64> {
        vec![0.0; 2 * self.params.joints]
    }

    fn step(&self, state: &[f64], action: &[f64], next: &mut [f64]) -> f64 {
        let p = &self.params;
        let k = p.joints;
        for j in 0..k {
            let omega = (1.0 - p.damping) * state[k + j] + p.dt * p.gain * clip_action(action[j]);
            next[k + j] = omega;
            next[j] = state[j] + p.dt * omega;
        }
        p.survival - p.energy * squared_norm_clipped(action)
    }

    fn raw_descriptor(&self, states: &[f64], _actions: &[f64]) -> Vec<f64> {
        let sd = self.spec.state_dim;
        let last = &states[(self.spec.horizon - 1) * sd..];
        let (x, y) = self.end_effector(&last[..self.params.joints]);
        vec![x, y]
    }
}

//! Episodic desk-scale control tasks with fixed horizon.
//!
//! Every environment clips actions to `[-1, 1]` before applying them, and
//! shifts its reward so the per-step minimum is non-negative. Fitness is the
//! plain sum of per-step rewards. Descriptors are clipped into
//! [`EnvSpec::descriptor_bounds`].

mod arm;
mod gait;
mod point_trap;

pub use arm::{ArmOmni, ArmParams};
pub use gait::{GaitParams, GaitUni};
pub use point_trap::{PointTrapOmni, PointTrapParams, Wall};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{Genotype, PolicyError, PolicySpec, Tape};
use crate::rng;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("policy/environment mismatch: {0}")]
    Mismatch(String),
    #[error("invalid environment parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
    pub descriptor_dim: usize,
    pub descriptor_bounds: Vec<(f64, f64)>,
    pub init_noise_std: f64,
}

pub trait Environment: Send + Sync {
    fn spec(&self) -> &EnvSpec;

    /// Noise-free initial state.
    fn nominal_state(&self) -> Vec<f64>;

    /// Advance one step. Writes the successor into `next` and returns the
    /// (shifted, non-negative) reward.
    fn step(&self, state: &[f64], action: &[f64], next: &mut [f64]) -> f64;

    /// Descriptor before clipping to bounds. `states` and `actions` are the
    /// row-major `H x dim` arrays of a rollout.
    fn raw_descriptor(&self, states: &[f64], actions: &[f64]) -> Vec<f64>;

    fn descriptor(&self, states: &[f64], actions: &[f64]) -> Vec<f64> {
        let mut d = self.raw_descriptor(states, actions);
        clip_to_bounds(&mut d, &self.spec().descriptor_bounds);
        d
    }
}

pub fn clip_to_bounds(d: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in d.iter_mut().zip(bounds) {
        *v = if v.is_nan() { lo } else { v.clamp(lo, hi) };
    }
}

#[inline]
pub(crate) fn clip_action(a: f64) -> f64 {
    a.clamp(-1.0, 1.0)
}

pub(crate) fn squared_norm_clipped(action: &[f64]) -> f64 {
    action.iter().map(|&a| clip_action(a).powi(2)).sum()
}

/// One episode of exactly `horizon` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    /// `s_0 .. s_{H-1}`, row-major `H x state_dim`.
    pub states: Vec<f64>,
    /// `a_t = mu(s_t)`, row-major `H x action_dim`.
    pub actions: Vec<f64>,
    /// `rewards[t]` is the reward received for acting at step `t`.
    pub rewards: Vec<f64>,
    pub fitness: f64,
    pub descriptor: Vec<f64>,
    /// Set when the policy or dynamics produced a non-finite value. The
    /// remaining steps repeat the last finite state with zero action and
    /// zero reward.
    pub truncated: bool,
}

impl Rollout {
    pub fn horizon(&self) -> usize {
        self.rewards.len()
    }
}

/// Run `g` for one episode. The initial state is the nominal state plus
/// `N(0, init_noise_std^2)` noise drawn from `seed`.
pub fn rollout(
    env: &dyn Environment,
    policy: &PolicySpec,
    g: &Genotype,
    seed: u64,
) -> Result<Rollout, EnvError> {
    let spec = env.spec();
    if policy.state_dim != spec.state_dim || policy.action_dim != spec.action_dim {
        return Err(EnvError::Mismatch(format!(
            "policy {}->{} vs env {} {}->{}",
            policy.state_dim, policy.action_dim, spec.name, spec.state_dim, spec.action_dim
        )));
    }
    if g.len() != policy.parameter_count() {
        return Err(EnvError::Policy(PolicyError::DimensionMismatch {
            what: "genotype",
            expected: policy.parameter_count(),
            got: g.len(),
        }));
    }
    let (sd, ad, h) = (spec.state_dim, spec.action_dim, spec.horizon);

    let mut state = env.nominal_state();
    if spec.init_noise_std > 0.0 {
        let mut rng = rng::seeded(seed);
        let noise = Normal::new(0.0, spec.init_noise_std)
            .map_err(|e| EnvError::InvalidParams(e.to_string()))?;
        for v in state.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }

    let mut states = Vec::with_capacity(h * sd);
    let mut actions = Vec::with_capacity(h * ad);
    let mut rewards = Vec::with_capacity(h);
    let mut next = vec![0.0; sd];
    let mut tape = Tape::new(policy);
    let mut truncated = false;

    for _ in 0..h {
        states.extend_from_slice(&state);
        if truncated {
            actions.extend(std::iter::repeat_n(0.0, ad));
            rewards.push(0.0);
            continue;
        }
        let action = policy.forward_into(g.as_slice(), &state, &mut tape);
        if action.iter().any(|a| !a.is_finite()) {
            truncated = true;
            actions.extend(std::iter::repeat_n(0.0, ad));
            rewards.push(0.0);
            continue;
        }
        let reward = env.step(&state, action, &mut next);
        if !reward.is_finite() || next.iter().any(|v| !v.is_finite()) {
            truncated = true;
            actions.extend(std::iter::repeat_n(0.0, ad));
            rewards.push(0.0);
            continue;
        }
        actions.extend_from_slice(action);
        rewards.push(reward);
        std::mem::swap(&mut state, &mut next);
    }

    let fitness = rewards.iter().sum();
    let descriptor = env.descriptor(&states, &actions);
    Ok(Rollout {
        states,
        actions,
        rewards,
        fitness,
        descriptor,
        truncated,
    })
}

/// Run-config selection of an environment by name, with per-environment
/// parameter overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum EnvConfig {
    PointTrapOmni(PointTrapParams),
    ArmOmni(ArmParams),
    GaitUni(GaitParams),
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::PointTrapOmni(PointTrapParams::default())
    }
}

impl EnvConfig {
    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::PointTrapOmni(_) => "point_trap_omni",
            EnvConfig::ArmOmni(_) => "arm_omni",
            EnvConfig::GaitUni(_) => "gait_uni",
        }
    }

    pub fn build(&self) -> Result<Box<dyn Environment>, EnvError> {
        Ok(match self {
            EnvConfig::PointTrapOmni(p) => Box::new(PointTrapOmni::new(p.clone())?),
            EnvConfig::ArmOmni(p) => Box::new(ArmOmni::new(p.clone())?),
            EnvConfig::GaitUni(p) => Box::new(GaitUni::new(p.clone())?),
        })
    }
}

pub(crate) fn check_common(horizon: usize, init_noise_std: f64) -> Result<(), EnvError> {
    if horizon == 0 {
        return Err(EnvError::InvalidParams("horizon must be positive".into()));
    }
    if !(init_noise_std >= 0.0) || !init_noise_std.is_finite() {
        return Err(EnvError::InvalidParams(
            "init_noise_std must be finite and non-negative".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_envs() -> Vec<Box<dyn Environment>> {
        vec![
            EnvConfig::PointTrapOmni(Default::default()).build().unwrap(),
            EnvConfig::ArmOmni(Default::default()).build().unwrap(),
            EnvConfig::GaitUni(Default::default()).build().unwrap(),
        ]
    }

    #[test]
    fn rollouts_are_deterministic_and_exact_length() {
        for env in all_envs() {
            let spec = env.spec().clone();
            let policy = PolicySpec::new(spec.state_dim, spec.action_dim, vec![8, 8]);
            let g = policy.init_genotype(5);
            let a = rollout(env.as_ref(), &policy, &g, 42).unwrap();
            let b = rollout(env.as_ref(), &policy, &g, 42).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.states.len(), spec.horizon * spec.state_dim);
            assert_eq!(a.actions.len(), spec.horizon * spec.action_dim);
            assert_eq!(a.rewards.len(), spec.horizon);
            assert_eq!(a.fitness, a.rewards.iter().sum::<f64>());
            assert!(a.fitness >= 0.0);
            let c = rollout(env.as_ref(), &policy, &g, 43).unwrap();
            assert_ne!(a.states, c.states, "{}: seed must perturb start", spec.name);
        }
    }

    #[test]
    fn mismatched_policy_is_rejected() {
        let env = EnvConfig::default().build().unwrap();
        let policy = PolicySpec::new(3, 2, vec![]);
        let g = policy.init_genotype(0);
        assert!(matches!(
            rollout(env.as_ref(), &policy, &g, 0),
            Err(EnvError::Mismatch(_))
        ));
    }

    #[test]
    fn exploding_policy_is_truncated_and_flagged() {
        // An unsquashed policy with huge weights overflows to inf on a
        // non-zero state.
        let env = PointTrapOmni::new(PointTrapParams {
            init_noise_std: 0.1,
            ..Default::default()
        })
        .unwrap();
        let policy = PolicySpec::new(4, 2, vec![]).with_output_squash(false);
        let g = Genotype::new(vec![1e308; policy.parameter_count()]).unwrap();
        let r = rollout(&env, &policy, &g, 1).unwrap();
        assert!(r.truncated);
        assert_eq!(r.rewards.len(), env.spec().horizon);
        assert!(r.rewards.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn config_selects_by_name_with_overrides() {
        let cfg: EnvConfig =
            serde_json::from_str(r#"{"name": "arm_omni", "horizon": 7, "joints": 2}"#).unwrap();
        let env = cfg.build().unwrap();
        assert_eq!(env.spec().name, "arm_omni");
        assert_eq!(env.spec().horizon, 7);
        assert_eq!(env.spec().state_dim, 4);
        assert!(serde_json::from_str::<EnvConfig>(r#"{"name": "nope"}"#).is_err());
    }

    #[test]
    fn descriptors_stay_in_bounds_for_random_policies() {
        for env in all_envs() {
            let spec = env.spec().clone();
            let policy = PolicySpec::new(spec.state_dim, spec.action_dim, vec![8]);
            for i in 0..300 {
                let mut g = policy.init_genotype(i).as_slice().to_vec();
                for v in g.iter_mut() {
                    *v *= 4.0;
                }
                let g = Genotype::new(g).unwrap();
                let r = rollout(env.as_ref(), &policy, &g, i).unwrap();
                for (v, (lo, hi)) in r.descriptor.iter().zip(&spec.descriptor_bounds) {
                    assert!(*lo <= *v && *v <= *hi, "{}: {v} outside", spec.name);
                }
            }
        }
    }
}

//! Rollout properties shared by every environment.

use asciime::env::{rollout, EnvConfig, GaitParams, ArmParams, PointTrapParams};
use asciime::policy::PolicySpec;

fn configs() -> Vec<EnvConfig> {
    vec![
        EnvConfig::PointTrapOmni(PointTrapParams::default()),
        EnvConfig::ArmOmni(ArmParams::default()),
        EnvConfig::GaitUni(GaitParams::default()),
    ]
}

#[test]
fn descriptors_stay_in_bounds_and_rewards_non_negative() {
    for cfg in configs() {
        let env = cfg.build().unwrap();
        let spec = env.spec().clone();
        let policy = PolicySpec::new(spec.state_dim, spec.action_dim, vec![8, 8]);
        let n = 10_000 / 3 + 1;
        for i in 0..n as u64 {
            let g = policy.init_genotype(i);
            let r = rollout(env.as_ref(), &policy, &g, i).unwrap();
            assert_eq!(r.horizon(), spec.horizon, "{}", spec.name);
            assert_eq!(r.states.len(), spec.horizon * spec.state_dim);
            assert!(r.rewards.iter().all(|&x| x >= 0.0 && x.is_finite()), "{}", spec.name);
            assert!(r.fitness >= 0.0);
            for (d, &(lo, hi)) in r.descriptor.iter().zip(&spec.descriptor_bounds) {
                assert!(*d >= lo && *d <= hi, "{}: {d} outside [{lo}, {hi}]", spec.name);
            }
        }
    }
}

#[test]
fn rollouts_are_reproducible_from_their_seed() {
    for cfg in configs() {
        let env = cfg.build().unwrap();
        let spec = env.spec().clone();
        let policy = PolicySpec::new(spec.state_dim, spec.action_dim, vec![4]);
        let g = policy.init_genotype(3);
        let a = rollout(env.as_ref(), &policy, &g, 77).unwrap();
        let b = rollout(env.as_ref(), &policy, &g, 77).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn mismatched_policy_is_rejected() {
    let env = EnvConfig::default().build().unwrap();
    let spec = env.spec().clone();
    let policy = PolicySpec::new(spec.state_dim + 1, spec.action_dim, vec![4]);
    assert!(rollout(env.as_ref(), &policy, &policy.init_genotype(0), 0).is_err());
}

//! One random policy rolled out in each environment.

use asciime::env::{rollout, ArmParams, EnvConfig, GaitParams, PointTrapParams};
use asciime::policy::PolicySpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for cfg in [
        EnvConfig::PointTrapOmni(PointTrapParams::default()),
        EnvConfig::ArmOmni(ArmParams::default()),
        EnvConfig::GaitUni(GaitParams::default()),
    ] {
        let env = cfg.build()?;
        let spec = env.spec();
        let policy = PolicySpec::new(spec.state_dim, spec.action_dim, vec![16]);
        println!(
            "{}: state {} action {} horizon {} descriptor bounds {:?}",
            spec.name, spec.state_dim, spec.action_dim, spec.horizon, spec.descriptor_bounds
        );
        for seed in 0..3 {
            let r = rollout(env.as_ref(), &policy, &policy.init_genotype(seed), seed)?;
            println!("  genotype {seed}: fitness {:8.3} descriptor {:.3?}", r.fitness, r.descriptor);
        }
    }
    Ok(())
}

//! Two parents from the point trap varied by Iso+LineDD and by action-sequence
//! crossover, with the children's fitness.

use asciime::archive::{EliteRecord, OperatorTag};
use asciime::buffer::Trajectory;
use asciime::env::{rollout, EnvConfig};
use asciime::variation::{ascii_mutate, isoline_dd, rewards_to_go, AsciiConfig, IsoLineConfig};
use asciime::policy::PolicySpec;
use rand::SeedableRng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = EnvConfig::default().build()?;
    let spec = env.spec();
    let policy = PolicySpec::new(spec.state_dim, spec.action_dim, vec![32, 32]);
    let ascii = AsciiConfig::default();

    // parent: worst of a few random genotypes; target: best of them
    let mut pool: Vec<_> = (0..32)
        .map(|s| {
            let g = policy.init_genotype(s);
            let r = rollout(env.as_ref(), &policy, &g, s).unwrap();
            (g, r)
        })
        .collect();
    pool.sort_by(|a, b| a.1.fitness.total_cmp(&b.1.fitness));
    let (pg, pr) = pool.first().unwrap().clone();
    let (tg, tr) = pool.last().unwrap().clone();
    println!("parent fitness {:.3}, target fitness {:.3}", pr.fitness, tr.fitness);

    let parent = EliteRecord {
        genotype: pg.clone(),
        fitness: pr.fitness,
        descriptor: pr.descriptor.clone(),
        states: pr.states.clone(),
        rewards_to_go: rewards_to_go(&pr.rewards, ascii.gamma),
        birth_iteration: 0,
        operator_tag: OperatorTag::Init,
    };
    let target = Trajectory::from_rollout(&tr, ascii.gamma, 0);

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    for i in 0..4 {
        let child = isoline_dd(&pg, &tg, &IsoLineConfig::default(), &mut rng)?;
        let r = rollout(env.as_ref(), &policy, &child, 100 + i)?;
        println!("iso+linedd child {i}: fitness {:.3}", r.fitness);
    }
    let out = ascii_mutate(&parent, &target, &policy, &ascii)?;
    let r = rollout(env.as_ref(), &policy, &out.genotype, 0)?;
    println!("crossover child: fitness {:.3} (aborted: {})", r.fitness, out.aborted);
    Ok(())
}

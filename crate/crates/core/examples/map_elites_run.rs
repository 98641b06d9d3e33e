//! One full run on the point trap, printing a line per iteration.
//!
//! Any `key=value` argument overrides the config, e.g.
//!
//! ```text
//! cargo run --release --example map_elites_run -- batch_size=1024 policy.hidden_layers=[16,16]
//! ```

use asciime::config::RunConfig;
use asciime::scheduler;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let overrides: Vec<String> = std::env::args().skip(1).collect();
    let cfg = RunConfig::load(None, &overrides)?;
    println!(
        "{} k={} ga_fraction={} budget={} hidden={:?}",
        cfg.env.name(),
        cfg.batch_size,
        cfg.ga_fraction,
        cfg.eval_budget,
        cfg.policy.hidden_layers
    );
    let result = scheduler::run(&cfg)?;
    println!("iter  evals     qd_score  coverage  max_fitness  +init  +iso  +ascii");
    for r in &result.reports {
        println!(
            "{:>4}  {:>6}  {:>11.2}  {:>7.2}%  {:>11.3}  {:>5}  {:>4}  {:>6}",
            r.iteration,
            r.evaluations,
            r.qd_score,
            r.coverage,
            r.max_fitness.unwrap_or(f64::NAN),
            r.additions.init,
            r.additions.isoline,
            r.additions.ascii
        );
    }
    println!("runtime {:.2}s", result.summary.runtime_secs);
    Ok(())
}

//! Final QD-score and coverage for several shares of Iso+LineDD offspring on
//! a short point-trap budget.
//!
//! ```text
//! cargo run --release --example ga_ablation -- eval_budget=20000
//! ```

use asciime::config::RunConfig;
use asciime::scheduler;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut overrides = vec![
        "batch_size=512".to_string(),
        "eval_budget=8192".to_string(),
        "policy.hidden_layers=[16,16]".to_string(),
    ];
    overrides.extend(std::env::args().skip(1));
    let base = RunConfig::load(None, &overrides)?;
    println!("ga_fraction  qd_score  coverage  +iso  +ascii");
    for ga in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let cfg = RunConfig {
            ga_fraction: ga,
            ..base.clone()
        };
        let s = scheduler::run(&cfg)?.summary;
        println!(
            "{ga:>11}  {:>8.1}  {:>7.2}%  {:>4}  {:>6}",
            s.qd_score, s.coverage, s.counters.isoline, s.counters.ascii
        );
    }
    Ok(())
}

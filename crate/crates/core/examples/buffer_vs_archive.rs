//! Crossover targets drawn from the replay buffer versus rebuilt from
//! archive elites.

use asciime::buffer::SourceMode;
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
    for mode in [SourceMode::Buffer, SourceMode::Archive] {
        let mut cfg = base.clone();
        cfg.buffer.source_mode = mode;
        let r = scheduler::run(&cfg)?;
        println!(
            "{mode:?}: qd_score {:.1}, coverage {:.2}%, crossover additions {}, {:.1}s",
            r.summary.qd_score, r.summary.coverage, r.summary.counters.ascii, r.summary.runtime_secs
        );
    }
    Ok(())
}

//! Batch-size sweep on the point trap followed by report tables, including
//! the efficiency score per batch size.

use asciime::bench::{report, run_sweep, SweepAxis, SweepSpec};
use asciime::config::RunConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut overrides = vec![
        "eval_budget=4096".to_string(),
        "policy.hidden_layers=[8]".to_string(),
    ];
    overrides.extend(std::env::args().skip(1));
    let spec = SweepSpec {
        base: RunConfig::load(None, &overrides)?,
        axis: SweepAxis::BatchSize,
        values: vec![128.into(), 256.into(), 512.into()],
        seeds: vec![0, 1],
        parallel: false,
    };
    let dir = scratch_dir()?;
    let outcome = run_sweep(&spec, &dir)?;
    for a in &outcome.aggregates {
        println!(
            "k={}: median qd {:.1}, median runtime {:.2}s",
            a.value,
            a.qd_median.unwrap_or(f64::NAN),
            a.runtime_median_secs.unwrap_or(f64::NAN)
        );
    }
    report(&dir, &dir.join("report"))?;
    print!("{}", std::fs::read_to_string(dir.join("report/efficiency_mean.csv"))?);
    println!("tables in {}", dir.join("report").display());
    Ok(())
}

fn scratch_dir() -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join(format!("asciime_batch_sweep_{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

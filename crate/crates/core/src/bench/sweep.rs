//! One run per (axis value, seed), with per-value medians and quartiles.
//!
//! Layout under the output directory:
//!
//! ```text
//! sweep.json                       the spec
//! runs.jsonl                       one RunRecord per run, in run order
//! aggregate.csv                    one AggregateRow per value
//! runs/<axis>_<value>/seed_<s>/    a normal run directory each
//! ```

use std::collections::HashSet;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::stats;
use super::BenchError;
use crate::config::RunConfig;
use crate::scheduler::{RunSummary, Runner};

pub const SWEEP_JSON: &str = "sweep.json";
pub const RUNS_JSONL: &str = "runs.jsonl";
pub const AGGREGATE_CSV: &str = "aggregate.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    BatchSize,
    GaFraction,
    SourceMode,
}

impl SweepAxis {
    pub fn key(self) -> &'static str {
        match self {
            SweepAxis::BatchSize => "batch_size",
            SweepAxis::GaFraction => "ga_fraction",
            SweepAxis::SourceMode => "buffer.source_mode",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::BatchSize => "batch_size",
            SweepAxis::GaFraction => "ga_fraction",
            SweepAxis::SourceMode => "source_mode",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "batch_size" => Ok(SweepAxis::BatchSize),
            "ga_fraction" => Ok(SweepAxis::GaFraction),
            "source_mode" => Ok(SweepAxis::SourceMode),
            other => Err(format!("unknown sweep axis `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: RunConfig,
    pub axis: SweepAxis,
    pub values: Vec<Value>,
    pub seeds: Vec<u64>,
    /// Run in parallel across runs. Runtimes are then not comparable.
    #[serde(default)]
    pub parallel: bool,
}

/// Display form of an axis value, used in directory names and tables.
pub fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.values.is_empty() {
            return Err(BenchError::Invalid("sweep needs at least one value".into()));
        }
        if self.seeds.is_empty() {
            return Err(BenchError::Invalid("sweep needs at least one seed".into()));
        }
        let mut seen = HashSet::new();
        if let Some(s) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(BenchError::Invalid(format!("seed {s} listed twice")));
        }
        let mut labels = HashSet::new();
        for v in &self.values {
            if !labels.insert(value_label(v)) {
                return Err(BenchError::Invalid(format!("value {v} listed twice")));
            }
        }
        Ok(())
    }

    /// The config of one run. Invalid combinations surface here and are
    /// recorded as failed runs by [`run_sweep`].
    pub fn config_for(&self, value: &Value, seed: u64) -> Result<RunConfig, BenchError> {
        Ok(self.base.with_overrides(&[
            format!("{}={}", self.axis.key(), value),
            format!("seed={seed}"),
        ])?)
    }

    pub fn run_dir(&self, root: &Path, value: &Value, seed: u64) -> PathBuf {
        root.join("runs")
            .join(format!("{}_{}", self.axis.name(), value_label(value)))
            .join(format!("seed_{seed}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub value: String,
    pub seed: u64,
    pub dir: String,
    pub ok: bool,
    pub error: Option<String>,
    pub summary: Option<RunSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub axis: String,
    pub value: String,
    pub runs: usize,
    pub failed: usize,
    pub qd_q1: Option<f64>,
    pub qd_median: Option<f64>,
    pub qd_q3: Option<f64>,
    pub coverage_q1: Option<f64>,
    pub coverage_median: Option<f64>,
    pub coverage_q3: Option<f64>,
    pub max_fitness_q1: Option<f64>,
    pub max_fitness_median: Option<f64>,
    pub max_fitness_q3: Option<f64>,
    pub runtime_median_secs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub records: Vec<RunRecord>,
    pub aggregates: Vec<AggregateRow>,
}

impl SweepOutcome {
    pub fn failed(&self) -> usize {
        self.records.iter().filter(|r| !r.ok).count()
    }
}

fn one_run(spec: &SweepSpec, root: &Path, value: &Value, seed: u64) -> RunRecord {
    let dir = spec.run_dir(root, value, seed);
    let result = spec.config_for(value, seed).and_then(|cfg| {
        catch_unwind(AssertUnwindSafe(|| {
            Runner::new(cfg)
                .and_then(|r| r.with_output_dir(&dir).run())
                .map_err(|e| BenchError::Invalid(e.to_string()))
        }))
        .unwrap_or_else(|_| Err(BenchError::Invalid("run panicked".into())))
    });
    let rel = dir.strip_prefix(root).unwrap_or(&dir).display().to_string();
    match result {
        Ok(r) => RunRecord {
            value: value_label(value),
            seed,
            dir: rel,
            ok: true,
            error: None,
            summary: Some(r.summary),
        },
        Err(e) => {
            log::warn!("run {} seed {seed} failed: {e}", value_label(value));
            RunRecord {
                value: value_label(value),
                seed,
                dir: rel,
                ok: false,
                error: Some(e.to_string()),
                summary: None,
            }
        }
    }
}

pub fn aggregate(axis: SweepAxis, values: &[Value], records: &[RunRecord]) -> Vec<AggregateRow> {
    values
        .iter()
        .map(|v| {
            let label = value_label(v);
            let mine: Vec<&RunRecord> = records.iter().filter(|r| r.value == label).collect();
            let ok: Vec<&RunSummary> = mine.iter().filter_map(|r| r.summary.as_ref()).collect();
            let qd: Vec<f64> = ok.iter().map(|s| s.qd_score).collect();
            let cov: Vec<f64> = ok.iter().map(|s| s.coverage).collect();
            let maxf: Vec<f64> = ok.iter().filter_map(|s| s.max_fitness).collect();
            let rt: Vec<f64> = ok.iter().map(|s| s.runtime_secs).collect();
            let q = |x: &[f64]| stats::quartiles(x);
            let (qd_q1, qd_median, qd_q3) = split(q(&qd));
            let (coverage_q1, coverage_median, coverage_q3) = split(q(&cov));
            let (max_fitness_q1, max_fitness_median, max_fitness_q3) = split(q(&maxf));
            AggregateRow {
                axis: axis.name().into(),
                value: label,
                runs: ok.len(),
                failed: mine.len() - ok.len(),
                qd_q1,
                qd_median,
                qd_q3,
                coverage_q1,
                coverage_median,
                coverage_q3,
                max_fitness_q1,
                max_fitness_median,
                max_fitness_q3,
                runtime_median_secs: stats::median(&rt),
            }
        })
        .collect()
}

fn split(q: Option<(f64, f64, f64)>) -> (Option<f64>, Option<f64>, Option<f64>) {
    match q {
        Some((a, b, c)) => (Some(a), Some(b), Some(c)),
        None => (None, None, None),
    }
}

/// Execute every run of `spec` under `out`. Failed runs are recorded and
/// the sweep carries on.
pub fn run_sweep(spec: &SweepSpec, out: &Path) -> Result<SweepOutcome, BenchError> {
    spec.validate()?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(SWEEP_JSON), serde_json::to_string_pretty(spec)?)?;

    let jobs: Vec<(&Value, u64)> = spec
        .values
        .iter()
        .flat_map(|v| spec.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let records: Vec<RunRecord> = if spec.parallel {
        log::warn!("parallel sweep: runtimes are not comparable across runs");
        jobs.par_iter().map(|&(v, s)| one_run(spec, out, v, s)).collect()
    } else {
        jobs.iter().map(|&(v, s)| one_run(spec, out, v, s)).collect()
    };

    let mut f = std::io::BufWriter::new(std::fs::File::create(out.join(RUNS_JSONL))?);
    for r in &records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;

    let aggregates = aggregate(spec.axis, &spec.values, &records);
    let mut w = csv::Writer::from_path(out.join(AGGREGATE_CSV))?;
    for a in &aggregates {
        w.serialize(a)?;
    }
    w.flush()?;
    Ok(SweepOutcome {
        records,
        aggregates,
    })
}

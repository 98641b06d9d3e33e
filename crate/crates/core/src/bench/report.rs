//! Plot-ready tables from a directory of run outputs.
//!
//! Every directory below the results root that holds a `config.json` or a
//! `reports.jsonl` is a run. A run is complete when it also has `run.json`.
//! Written to `<out>/`:
//!
//! | file               | one row per                          |
//! |--------------------|--------------------------------------|
//! | `curves.csv`       | run and iteration                    |
//! | `attribution.csv`  | run and iteration, with running sums |
//! | `final.csv`        | complete run                         |
//! | `efficiency.csv`   | config, task and batch size          |
//! | `efficiency_mean.csv` | config and batch size             |
//! | `manifest.json`    | schema version, run counts, problems |
//!
//! The config label of a run is `ga<ga_fraction>_<source_mode>`. Efficiency
//! inputs are per-(config, task, batch size) medians over seeds.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::efficiency::{efficiency_scores, EfficiencyInput};
use super::stats;
use super::BenchError;
use crate::archive::AdditionCounters;
use crate::config::RunConfig;
use crate::scheduler::{self, IterationReport, RunSummary, CONFIG_JSON, REPORTS_JSONL, RUN_JSON};

pub const SCHEMA_VERSION: u32 = 1;

pub const CURVES_HEADER: &[&str] = &[
    "run",
    "env",
    "config",
    "batch_size",
    "seed",
    "iteration",
    "evaluations",
    "wall_clock_ms",
    "qd_score",
    "coverage",
    "max_fitness",
];
pub const ATTRIBUTION_HEADER: &[&str] = &[
    "run",
    "config",
    "seed",
    "iteration",
    "evaluations",
    "added_init",
    "added_isoline",
    "added_ascii",
    "cumulative_init",
    "cumulative_isoline",
    "cumulative_ascii",
];
pub const FINAL_HEADER: &[&str] = &[
    "run",
    "env",
    "config",
    "batch_size",
    "seed",
    "evaluations",
    "iterations",
    "runtime_secs",
    "qd_score",
    "coverage",
    "max_fitness",
    "added_init",
    "added_isoline",
    "added_ascii",
];
pub const EFFICIENCY_HEADER: &[&str] = &[
    "config",
    "task",
    "batch_size",
    "normalized_qd",
    "normalized_runtime",
    "adjusted_runtime",
    "score",
];
pub const EFFICIENCY_MEAN_HEADER: &[&str] = &["config", "batch_size", "mean_score", "tasks", "best"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportIssue {
    pub run: String,
    pub problem: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOutcome {
    pub schema_version: u32,
    pub runs_found: usize,
    pub complete_runs: usize,
    pub issues: Vec<ReportIssue>,
}

impl ReportOutcome {
    pub fn nothing_to_report(&self) -> bool {
        self.runs_found == 0
    }
}

struct RunData {
    name: String,
    config: RunConfig,
    reports: Vec<IterationReport>,
    summary: Option<RunSummary>,
}

pub fn config_label(cfg: &RunConfig) -> String {
    let mode = match cfg.buffer.source_mode {
        crate::buffer::SourceMode::Buffer => "buffer",
        crate::buffer::SourceMode::Archive => "archive",
    };
    format!("ga{}_{}", cfg.ga_fraction, mode)
}

fn find_runs(dir: &Path, skip: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    if dir == skip {
        return Ok(());
    }
    if dir.join(CONFIG_JSON).is_file() || dir.join(REPORTS_JSONL).is_file() {
        out.push(dir.to_path_buf());
        return Ok(());
    }
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            find_runs(&path, skip, out)?;
        }
    }
    Ok(())
}

fn load_run(root: &Path, dir: &Path, issues: &mut Vec<ReportIssue>) -> Option<RunData> {
    let name = dir
        .strip_prefix(root)
        .unwrap_or(dir)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/");
    let name = if name.is_empty() { ".".to_string() } else { name };
    let mut problem = |p: String| {
        issues.push(ReportIssue {
            run: name.clone(),
            problem: p,
        })
    };

    let config = match std::fs::read_to_string(dir.join(CONFIG_JSON)) {
        Ok(t) => match serde_json::from_str::<RunConfig>(&t) {
            Ok(c) => c,
            Err(e) => {
                problem(format!("corrupt {CONFIG_JSON}: {e}"));
                return None;
            }
        },
        Err(_) => {
            problem(format!("missing {CONFIG_JSON}"));
            return None;
        }
    };
    let reports = match scheduler::read_reports(&dir.join(REPORTS_JSONL)) {
        Ok(r) => r,
        Err(e) => {
            problem(format!("unreadable {REPORTS_JSONL}: {e}"));
            return None;
        }
    };
    let summary = match std::fs::read_to_string(dir.join(RUN_JSON)) {
        Ok(t) => match serde_json::from_str::<RunSummary>(&t) {
            Ok(s) => Some(s),
            Err(e) => {
                problem(format!("corrupt {RUN_JSON}: {e}"));
                None
            }
        },
        Err(_) => {
            problem(format!("missing {RUN_JSON}: run incomplete"));
            None
        }
    };
    Some(RunData {
        name,
        config,
        reports,
        summary,
    })
}

fn writer(path: &Path, header: &[&str]) -> Result<csv::Writer<std::fs::File>, BenchError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    Ok(w)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Build all tables for the runs below `results_dir` into `out_dir`.
/// Problems with individual runs are collected, not fatal.
pub fn report(results_dir: &Path, out_dir: &Path) -> Result<ReportOutcome, BenchError> {
    let mut dirs = Vec::new();
    if results_dir.is_dir() {
        find_runs(results_dir, out_dir, &mut dirs)?;
    }
    dirs.sort();
    let mut issues = Vec::new();
    let runs: Vec<RunData> = dirs
        .iter()
        .filter_map(|d| load_run(results_dir, d, &mut issues))
        .collect();

    std::fs::create_dir_all(out_dir)?;
    let mut curves = writer(&out_dir.join("curves.csv"), CURVES_HEADER)?;
    let mut attribution = writer(&out_dir.join("attribution.csv"), ATTRIBUTION_HEADER)?;
    let mut finals = writer(&out_dir.join("final.csv"), FINAL_HEADER)?;
    let mut groups: BTreeMap<(String, String, usize), Vec<&RunSummary>> = BTreeMap::new();

    for run in &runs {
        let label = config_label(&run.config);
        let env = run.config.env.name();
        let seed = run.config.seed.to_string();
        let mut cumulative = AdditionCounters::default();
        for r in &run.reports {
            cumulative += r.additions;
            curves.write_record([
                run.name.clone(),
                env.to_string(),
                label.clone(),
                run.config.batch_size.to_string(),
                seed.clone(),
                r.iteration.to_string(),
                r.evaluations.to_string(),
                r.wall_clock_ms.to_string(),
                r.qd_score.to_string(),
                r.coverage.to_string(),
                opt(r.max_fitness),
            ])?;
            attribution.write_record([
                run.name.clone(),
                label.clone(),
                seed.clone(),
                r.iteration.to_string(),
                r.evaluations.to_string(),
                r.additions.init.to_string(),
                r.additions.isoline.to_string(),
                r.additions.ascii.to_string(),
                cumulative.init.to_string(),
                cumulative.isoline.to_string(),
                cumulative.ascii.to_string(),
            ])?;
        }
        if let Some(s) = &run.summary {
            finals.write_record([
                run.name.clone(),
                env.to_string(),
                label.clone(),
                s.batch_size.to_string(),
                seed.clone(),
                s.evaluations.to_string(),
                s.iterations.to_string(),
                s.runtime_secs.to_string(),
                s.qd_score.to_string(),
                s.coverage.to_string(),
                opt(s.max_fitness),
                s.counters.init.to_string(),
                s.counters.isoline.to_string(),
                s.counters.ascii.to_string(),
            ])?;
            groups
                .entry((label, env.to_string(), s.batch_size))
                .or_default()
                .push(s);
        }
    }
    curves.flush()?;
    attribution.flush()?;
    finals.flush()?;

    let inputs: Vec<EfficiencyInput> = groups
        .iter()
        .map(|((config, task, batch_size), runs)| {
            let qd: Vec<f64> = runs.iter().map(|s| s.qd_score).collect();
            let rt: Vec<f64> = runs.iter().map(|s| s.runtime_secs).collect();
            EfficiencyInput {
                config: config.clone(),
                task: task.clone(),
                batch_size: *batch_size,
                qd_score: stats::median(&qd).expect("non-empty group"),
                runtime_secs: stats::median(&rt).expect("non-empty group"),
            }
        })
        .collect();
    let mut eff = writer(&out_dir.join("efficiency.csv"), EFFICIENCY_HEADER)?;
    let mut eff_mean = writer(&out_dir.join("efficiency_mean.csv"), EFFICIENCY_MEAN_HEADER)?;
    if !inputs.is_empty() {
        let table = efficiency_scores(&inputs)?;
        for r in &table.rows {
            eff.write_record([
                r.config.clone(),
                r.task.clone(),
                r.batch_size.to_string(),
                r.normalized_qd.to_string(),
                r.normalized_runtime.to_string(),
                r.adjusted_runtime.to_string(),
                r.score.to_string(),
            ])?;
        }
        for m in &table.means {
            eff_mean.write_record([
                m.config.clone(),
                m.batch_size.to_string(),
                m.mean_score.to_string(),
                m.tasks.to_string(),
                (table.best.get(&m.config) == Some(&m.batch_size)).to_string(),
            ])?;
        }
    }
    eff.flush()?;
    eff_mean.flush()?;

    let outcome = ReportOutcome {
        schema_version: SCHEMA_VERSION,
        runs_found: dirs.len(),
        complete_runs: runs.iter().filter(|r| r.summary.is_some()).count(),
        issues,
    };
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&outcome)?,
    )?;
    Ok(outcome)
}

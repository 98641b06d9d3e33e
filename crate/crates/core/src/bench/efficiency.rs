//! Batch-size efficiency score.
//!
//! For every (algorithm config, task) pair, QD-scores and runtimes are
//! min-max normalised across the batch sizes tried. The runtime score is
//! flipped to `1 - normalised`, multiplied with the normalised QD-score,
//! averaged across tasks per (config, batch size), and the batch size with
//! the highest mean is selected per config.
//!
//! When every batch size of a pair has the same value on an axis, the score
//! on that axis is 1 (for runtime this is the flipped score), so a lone or
//! uniform group is not penalised.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::BenchError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyInput {
    /// Algorithm configuration label, e.g. `ga0.5_buffer`.
    pub config: String,
    pub task: String,
    pub batch_size: usize,
    pub qd_score: f64,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub config: String,
    pub task: String,
    pub batch_size: usize,
    pub normalized_qd: f64,
    pub normalized_runtime: f64,
    pub adjusted_runtime: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanScore {
    pub config: String,
    pub batch_size: usize,
    pub mean_score: f64,
    pub tasks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyTable {
    /// Sorted by (config, task, batch size).
    pub rows: Vec<EfficiencyRow>,
    /// Sorted by (config, batch size).
    pub means: Vec<MeanScore>,
    /// Best batch size per config; ties go to the smaller batch size.
    pub best: BTreeMap<String, usize>,
}

struct Axis {
    min: f64,
    max: f64,
}

impl Axis {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let mut a = Axis {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        };
        for v in values {
            a.min = a.min.min(v);
            a.max = a.max.max(v);
        }
        a
    }

    fn degenerate(&self) -> bool {
        self.max == self.min
    }

    fn normalize(&self, v: f64) -> f64 {
        if self.degenerate() {
            1.0
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }
}

pub fn efficiency_scores(inputs: &[EfficiencyInput]) -> Result<EfficiencyTable, BenchError> {
    if inputs.is_empty() {
        return Err(BenchError::Empty);
    }
    let mut groups: BTreeMap<(&str, &str), Vec<&EfficiencyInput>> = BTreeMap::new();
    for i in inputs {
        if !i.qd_score.is_finite() || !i.runtime_secs.is_finite() {
            return Err(BenchError::Invalid(format!(
                "non-finite result for {} / {} / {}",
                i.config, i.task, i.batch_size
            )));
        }
        groups.entry((&i.config, &i.task)).or_default().push(i);
    }

    let mut rows = Vec::with_capacity(inputs.len());
    for ((config, task), mut group) in groups {
        group.sort_by_key(|i| i.batch_size);
        if group.windows(2).any(|w| w[0].batch_size == w[1].batch_size) {
            return Err(BenchError::Invalid(format!(
                "duplicate batch size for {config} / {task}"
            )));
        }
        let qd = Axis::of(group.iter().map(|i| i.qd_score));
        let rt = Axis::of(group.iter().map(|i| i.runtime_secs));
        for i in group {
            let normalized_qd = qd.normalize(i.qd_score);
            let normalized_runtime = if rt.degenerate() {
                0.0
            } else {
                rt.normalize(i.runtime_secs)
            };
            let adjusted_runtime = 1.0 - normalized_runtime;
            rows.push(EfficiencyRow {
                config: config.to_string(),
                task: task.to_string(),
                batch_size: i.batch_size,
                normalized_qd,
                normalized_runtime,
                adjusted_runtime,
                score: normalized_qd * adjusted_runtime,
            });
        }
    }

    let mut sums: BTreeMap<(&str, usize), (f64, usize)> = BTreeMap::new();
    for r in &rows {
        let e = sums.entry((&r.config, r.batch_size)).or_insert((0.0, 0));
        e.0 += r.score;
        e.1 += 1;
    }
    let means: Vec<MeanScore> = sums
        .into_iter()
        .map(|((config, batch_size), (sum, n))| MeanScore {
            config: config.to_string(),
            batch_size,
            mean_score: sum / n as f64,
            tasks: n,
        })
        .collect();

    let mut best: BTreeMap<String, (usize, f64)> = BTreeMap::new();
    for m in &means {
        let slot = best
            .entry(m.config.clone())
            .or_insert((m.batch_size, m.mean_score));
        if m.mean_score > slot.1 {
            *slot = (m.batch_size, m.mean_score);
        }
    }
    Ok(EfficiencyTable {
        rows,
        means,
        best: best.into_iter().map(|(c, (b, _))| (c, b)).collect(),
    })
}

//! CVT MAP-Elites archive.
//!
//! Each cell keeps at most one [`EliteRecord`]. A candidate enters an empty
//! cell, replaces the incumbent only when its fitness is strictly greater,
//! and is rejected otherwise. Every elite carries the state sequence and
//! rewards-to-go of the evaluation that produced it, because the
//! action-sequence operator compares them against a target trajectory.

mod centroids;

pub use centroids::{Centroids, LLOYD_MAX_ITERATIONS, SAMPLES_PER_CENTROID};

use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::Genotype;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("invalid descriptor bounds: {0}")]
    InvalidBounds(String),
    #[error("invalid centroids: {0}")]
    InvalidCentroids(String),
    #[error("cannot sample from an empty archive")]
    Empty,
    #[error("descriptor has {got} dimensions, archive expects {expected}")]
    DescriptorDim { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("snapshot: {0}")]
    Snapshot(#[from] bincode::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorTag {
    Init,
    Isoline,
    Ascii,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliteRecord {
    pub genotype: Genotype,
    pub fitness: f64,
    pub descriptor: Vec<f64>,
    /// `s_0 .. s_{H-1}` of this elite's evaluation, row-major.
    pub states: Vec<f64>,
    pub rewards_to_go: Vec<f64>,
    pub birth_iteration: u64,
    pub operator_tag: OperatorTag,
}

impl EliteRecord {
    pub fn horizon(&self) -> usize {
        self.rewards_to_go.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdditionOutcome {
    Inserted,
    Replaced,
    Rejected,
}

impl AdditionOutcome {
    pub fn added(self) -> bool {
        !matches!(self, AdditionOutcome::Rejected)
    }
}

/// Successful insertions plus replacements, by operator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdditionCounters {
    pub init: u64,
    pub isoline: u64,
    pub ascii: u64,
}

impl AdditionCounters {
    pub fn record(&mut self, tag: OperatorTag) {
        match tag {
            OperatorTag::Init => self.init += 1,
            OperatorTag::Isoline => self.isoline += 1,
            OperatorTag::Ascii => self.ascii += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.init + self.isoline + self.ascii
    }
}

impl std::ops::AddAssign for AdditionCounters {
    fn add_assign(&mut self, rhs: Self) {
        self.init += rhs.init;
        self.isoline += rhs.isoline;
        self.ascii += rhs.ascii;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub qd_score: f64,
    /// Percentage of occupied cells, in `[0, 100]`.
    pub coverage: f64,
    /// `None` when the archive is empty.
    pub max_fitness: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Archive {
    centroids: Arc<Centroids>,
    cells: Vec<Option<EliteRecord>>,
    /// Occupied cell indices in order of first occupation.
    occupied: Vec<usize>,
    counters: AdditionCounters,
}

impl PartialEq for Archive {
    fn eq(&self, other: &Self) -> bool {
        self.centroids == other.centroids
            && self.cells == other.cells
            && self.occupied == other.occupied
            && self.counters == other.counters
    }
}

impl Archive {
    pub fn new(centroids: Arc<Centroids>) -> Self {
        let n = centroids.len();
        Archive {
            centroids,
            cells: vec![None; n],
            occupied: Vec::new(),
            counters: AdditionCounters::default(),
        }
    }

    pub fn centroids(&self) -> &Centroids {
        &self.centroids
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    pub fn counters(&self) -> AdditionCounters {
        self.counters
    }

    pub fn cell(&self, index: usize) -> Option<&EliteRecord> {
        self.cells.get(index).and_then(Option::as_ref)
    }

    pub fn cell_index(&self, descriptor: &[f64]) -> Result<usize, ArchiveError> {
        if descriptor.len() != self.centroids.dim() {
            return Err(ArchiveError::DescriptorDim {
                expected: self.centroids.dim(),
                got: descriptor.len(),
            });
        }
        Ok(self.centroids.cell_index(descriptor))
    }

    /// Occupied cells as `(index, elite)` in ascending cell order.
    pub fn elites(&self) -> impl Iterator<Item = (usize, &EliteRecord)> {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.as_ref().map(|e| (i, e)))
    }

    pub fn try_add(&mut self, candidate: EliteRecord) -> Result<AdditionOutcome, ArchiveError> {
        let idx = self.cell_index(&candidate.descriptor)?;
        let outcome = match &self.cells[idx] {
            None => {
                self.occupied.push(idx);
                AdditionOutcome::Inserted
            }
            Some(incumbent) if incumbent.fitness < candidate.fitness => AdditionOutcome::Replaced,
            Some(_) => return Ok(AdditionOutcome::Rejected),
        };
        self.counters.record(candidate.operator_tag);
        self.cells[idx] = Some(candidate);
        Ok(outcome)
    }

    /// `n` elites drawn uniformly over occupied cells, with replacement.
    pub fn sample_uniform<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<&EliteRecord>, ArchiveError> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<&EliteRecord, ArchiveError> {
        if self.occupied.is_empty() {
            return Err(ArchiveError::Empty);
        }
        let cell = self.occupied[rng.random_range(0..self.occupied.len())];
        Ok(self.cells[cell].as_ref().expect("occupied cell"))
    }

    pub fn metrics(&self) -> Metrics {
        let mut qd_score = 0.0;
        let mut max_fitness: Option<f64> = None;
        for (_, e) in self.elites() {
            qd_score += e.fitness;
            max_fitness = Some(max_fitness.map_or(e.fitness, |m| m.max(e.fitness)));
        }
        Metrics {
            qd_score,
            coverage: 100.0 * self.len() as f64 / self.num_cells() as f64,
            max_fitness,
        }
    }

    /// Per-cell fitness in cell order, `None` for empty cells.
    pub fn fitness_table(&self) -> Vec<Option<f64>> {
        self.cells.iter().map(|c| c.as_ref().map(|e| e.fitness)).collect()
    }

    pub fn save_snapshot(&self, path: &Path) -> Result<(), ArchiveError> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        bincode::serialize_into(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_snapshot(path: &Path) -> Result<Self, ArchiveError> {
        let r = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(bincode::deserialize_from(r)?)
    }

    /// Plot-oriented summary: metrics plus one entry per occupied cell.
    pub fn summary(&self) -> ArchiveSummary {
        ArchiveSummary {
            num_cells: self.num_cells(),
            metrics: self.metrics(),
            counters: self.counters,
            cells: self
                .elites()
                .map(|(i, e)| CellSummary {
                    cell: i,
                    fitness: e.fitness,
                    descriptor: e.descriptor.clone(),
                    birth_iteration: e.birth_iteration,
                    operator_tag: e.operator_tag,
                })
                .collect(),
        }
    }

    pub fn write_summary(&self, path: &Path) -> Result<(), ArchiveError> {
        std::fs::write(path, serde_json::to_string_pretty(&self.summary())?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    pub fitness: f64,
    pub descriptor: Vec<f64>,
    pub birth_iteration: u64,
    pub operator_tag: OperatorTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveSummary {
    pub num_cells: usize,
    pub metrics: Metrics,
    pub counters: AdditionCounters,
    pub cells: Vec<CellSummary>,
}

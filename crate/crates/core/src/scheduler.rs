//! The outer MAP-Elites loop.
//!
//! One iteration:
//!
//! 1. select parents (and targets) serially from per-slot random streams,
//! 2. mutate the batch in parallel: the first `g` slots with Iso+LineDD, the
//!    rest with the action-sequence operator,
//! 3. evaluate the batch in parallel,
//! 4. in batch order, push each trajectory into the buffer and offer each
//!    candidate to the archive.
//!
//! Iteration 0 is the random initial population. Every random draw comes
//! from a stream keyed by `(seed, iteration, slot, purpose)` and no float
//! reduction crosses workers, so the result does not depend on
//! `worker_count`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::{AdditionCounters, Archive, ArchiveError, Centroids, EliteRecord, OperatorTag};
use crate::buffer::{BufferError, ReplayBuffer, SourceMode, Trajectory};
use crate::config::{ConfigError, RunConfig};
use crate::env::{rollout, EnvError, Environment, Rollout};
use crate::policy::{Genotype, PolicySpec};
use crate::rng::{self, Purpose};
use crate::variation::{ascii_mutate, isoline_dd, VariationError};

pub const REPORTS_JSONL: &str = "reports.jsonl";
pub const REPORTS_CSV: &str = "reports.csv";
pub const RUN_JSON: &str = "run.json";
pub const CONFIG_JSON: &str = "config.json";
pub const ARCHIVE_SNAPSHOT: &str = "archive.bin";
pub const ARCHIVE_SUMMARY: &str = "archive_summary.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Buffer(#[from] BufferError),
    #[error(transparent)]
    Variation(#[from] VariationError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serialize(String),
    #[error("worker panicked in iteration {iteration}: {message}")]
    WorkerPanic {
        iteration: u64,
        message: String,
        /// Reports of the iterations completed before the panic.
        reports: Vec<IterationReport>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: u64,
    /// `iteration * batch_size + batch_size`: the initial population counts.
    pub evaluations: u64,
    pub qd_score: f64,
    pub coverage: f64,
    pub max_fitness: Option<f64>,
    /// Candidates of this iteration that entered the archive, by operator.
    pub additions: AdditionCounters,
    /// Milliseconds since the start of the run.
    pub wall_clock_ms: f64,
    pub ascii_aborts: u64,
}

/// Flat row of `reports.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub iteration: u64,
    pub evaluations: u64,
    pub qd_score: f64,
    pub coverage: f64,
    pub max_fitness: Option<f64>,
    pub additions_init: u64,
    pub additions_isoline: u64,
    pub additions_ascii: u64,
    pub wall_clock_ms: f64,
    pub ascii_aborts: u64,
}

impl From<&IterationReport> for ReportRow {
    fn from(r: &IterationReport) -> Self {
        ReportRow {
            iteration: r.iteration,
            evaluations: r.evaluations,
            qd_score: r.qd_score,
            coverage: r.coverage,
            max_fitness: r.max_fitness,
            additions_init: r.additions.init,
            additions_isoline: r.additions.isoline,
            additions_ascii: r.additions.ascii,
            wall_clock_ms: r.wall_clock_ms,
            ascii_aborts: r.ascii_aborts,
        }
    }
}

/// Written to `run.json` when a run finishes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub env: String,
    pub seed: u64,
    pub batch_size: usize,
    pub ga_fraction: f64,
    pub source_mode: SourceMode,
    pub evaluations: u64,
    pub iterations: u64,
    /// Init through final insertion, excluding time spent writing outputs.
    pub runtime_secs: f64,
    pub qd_score: f64,
    pub coverage: f64,
    pub max_fitness: Option<f64>,
    pub counters: AdditionCounters,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub archive: Archive,
    pub reports: Vec<IterationReport>,
    pub summary: RunSummary,
}

impl RunResult {
    /// Sum of per-iteration additions; equals the archive counters.
    pub fn summed_additions(&self) -> AdditionCounters {
        let mut total = AdditionCounters::default();
        for r in &self.reports {
            total += r.additions;
        }
        total
    }
}

/// Seed of the rollout for `slot` of `iteration`.
pub fn rollout_seed(run_seed: u64, iteration: u64, slot: usize) -> u64 {
    rng::derive_seed(run_seed, iteration, slot as u64, Purpose::Evaluation)
}

/// Evaluate `genotypes[i]` with `seeds[i]` on the current rayon pool. The
/// output is in input order. Rollouts that went non-finite get fitness 0.
pub fn evaluate_batch(
    genotypes: &[Genotype],
    env: &dyn Environment,
    policy: &PolicySpec,
    seeds: &[u64],
) -> Result<Vec<Rollout>, EnvError> {
    if genotypes.len() != seeds.len() {
        return Err(EnvError::Mismatch(format!(
            "{} genotypes but {} seeds",
            genotypes.len(),
            seeds.len()
        )));
    }
    genotypes
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(g, &seed)| {
            let mut r = rollout(env, policy, g, seed)?;
            if r.truncated {
                log::debug!("non-finite rollout with seed {seed}; fitness set to 0");
                r.fitness = 0.0;
            }
            Ok(r)
        })
        .collect()
}

pub fn run(cfg: &RunConfig) -> Result<RunResult, RunError> {
    Runner::new(cfg.clone())?.run()
}

/// A configured run. Use [`Runner::with_output_dir`] to stream reports and
/// checkpoints to disk.
pub struct Runner {
    cfg: RunConfig,
    env: Box<dyn Environment>,
    policy: PolicySpec,
    output_dir: Option<PathBuf>,
}

enum Target<'a> {
    Buffer(Arc<Trajectory>),
    Elite(&'a EliteRecord),
}

enum Job<'a> {
    Isoline(&'a EliteRecord, &'a EliteRecord),
    Ascii(&'a EliteRecord, Target<'a>),
}

struct Sinks {
    dir: PathBuf,
    jsonl: BufWriter<File>,
}

impl Runner {
    pub fn new(cfg: RunConfig) -> Result<Self, RunError> {
        cfg.validate()?;
        let env = cfg.env.build()?;
        Self::assemble(cfg, env)
    }

    /// Run against an environment not expressible in [`RunConfig::env`].
    pub fn with_environment(cfg: RunConfig, env: Box<dyn Environment>) -> Result<Self, RunError> {
        cfg.validate()?;
        Self::assemble(cfg, env)
    }

    fn assemble(cfg: RunConfig, env: Box<dyn Environment>) -> Result<Self, RunError> {
        let policy = cfg.policy.spec(env.spec().state_dim, env.spec().action_dim);
        policy
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(Runner {
            cfg,
            env,
            policy,
            output_dir: None,
        })
    }

    pub fn with_output_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.output_dir = Some(dir.into());
        self
    }

    pub fn policy(&self) -> &PolicySpec {
        &self.policy
    }

    fn centroids(&self) -> Result<Arc<Centroids>, RunError> {
        let a = &self.cfg.archive;
        let bounds = &self.env.spec().descriptor_bounds;
        Ok(match (a.grid_bins, &a.cache_dir) {
            (Some(bins), _) => Arc::new(Centroids::grid(bins, bounds)?),
            (None, Some(dir)) => Arc::new(Centroids::load_or_generate(
                Path::new(dir),
                a.num_centroids,
                bounds,
                a.centroid_seed,
            )?),
            (None, None) => Centroids::shared(a.num_centroids, bounds, a.centroid_seed)?,
        })
    }

    pub fn run(self) -> Result<RunResult, RunError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.worker_count)
            .build()
            .map_err(|e| RunError::Config(ConfigError::Invalid(e.to_string())))?;

        let mut sinks = match &self.output_dir {
            Some(dir) => Some(self.open_sinks(dir)?),
            None => None,
        };

        let centroids = self.centroids()?;
        let start = Instant::now();
        let mut io_secs = 0.0;
        let elapsed_ms = |io: f64| (start.elapsed().as_secs_f64() - io) * 1e3;

        let cfg = &self.cfg;
        let k = cfg.batch_size;
        let env = self.env.as_ref();
        let horizon = env.spec().horizon;
        let mut archive = Archive::new(centroids);
        let mut buffer = ReplayBuffer::from_config(&cfg.buffer, horizon)?;
        let mut reports: Vec<IterationReport> = Vec::new();
        let mut evaluations: u64 = 0;
        let mut iteration: u64 = 0;

        while evaluations < cfg.eval_budget as u64 {
            let produced = {
                let archive_ref = &archive;
                let buffer_ref = &buffer;
                catch_unwind(AssertUnwindSafe(|| {
                    pool.install(|| self.produce(iteration, archive_ref, buffer_ref))
                }))
            };
            let (offspring, tags, aborts) = match produced {
                Ok(r) => r?,
                Err(payload) => {
                    return Err(self.abort(iteration, payload, reports, &mut sinks));
                }
            };

            let seeds: Vec<u64> = (0..k).map(|i| rollout_seed(cfg.seed, iteration, i)).collect();
            let evaluated = catch_unwind(AssertUnwindSafe(|| {
                pool.install(|| evaluate_batch(&offspring, env, &self.policy, &seeds))
            }));
            let rollouts = match evaluated {
                Ok(r) => r?,
                Err(payload) => {
                    return Err(self.abort(iteration, payload, reports, &mut sinks));
                }
            };

            let before = archive.counters();
            for ((genotype, r), tag) in offspring.into_iter().zip(rollouts).zip(tags) {
                let traj = Trajectory::from_rollout(&r, cfg.operators.ascii.gamma, iteration);
                let elite = EliteRecord {
                    genotype,
                    fitness: r.fitness,
                    descriptor: r.descriptor,
                    states: r.states,
                    rewards_to_go: traj.rewards_to_go.clone(),
                    birth_iteration: iteration,
                    operator_tag: tag,
                };
                buffer.insert(traj)?;
                archive.try_add(elite)?;
            }
            evaluations += k as u64;

            let after = archive.counters();
            let m = archive.metrics();
            let report = IterationReport {
                iteration,
                evaluations,
                qd_score: m.qd_score,
                coverage: m.coverage,
                max_fitness: m.max_fitness,
                additions: AdditionCounters {
                    init: after.init - before.init,
                    isoline: after.isoline - before.isoline,
                    ascii: after.ascii - before.ascii,
                },
                wall_clock_ms: elapsed_ms(io_secs),
                ascii_aborts: aborts,
            };
            log::info!(
                "iter {} evals {} qd {:.3} coverage {:.2}% max {:?}",
                report.iteration,
                report.evaluations,
                report.qd_score,
                report.coverage,
                report.max_fitness
            );

            if let Some(s) = sinks.as_mut() {
                let t = Instant::now();
                serde_json::to_writer(&mut s.jsonl, &report)
                    .map_err(|e| RunError::Serialize(e.to_string()))?;
                s.jsonl.write_all(b"\n")?;
                s.jsonl.flush()?;
                if let Some(every) = cfg.checkpoint_every {
                    if iteration.is_multiple_of(every) {
                        let path = s
                            .dir
                            .join(CHECKPOINT_DIR)
                            .join(format!("archive_{iteration:06}.bin"));
                        archive.save_snapshot(&path)?;
                    }
                }
                io_secs += t.elapsed().as_secs_f64();
            }
            reports.push(report);
            iteration += 1;
        }

        let runtime_secs = start.elapsed().as_secs_f64() - io_secs;
        let m = archive.metrics();
        let summary = RunSummary {
            env: env.spec().name.clone(),
            seed: cfg.seed,
            batch_size: k,
            ga_fraction: cfg.ga_fraction,
            source_mode: cfg.buffer.source_mode,
            evaluations,
            iterations: iteration,
            runtime_secs,
            qd_score: m.qd_score,
            coverage: m.coverage,
            max_fitness: m.max_fitness,
            counters: archive.counters(),
        };
        if let Some(s) = sinks {
            write_final(&s.dir, &reports, &summary, &archive)?;
        }
        Ok(RunResult {
            archive,
            reports,
            summary,
        })
    }

    fn open_sinks(&self, dir: &Path) -> Result<Sinks, RunError> {
        std::fs::create_dir_all(dir)?;
        if self.cfg.checkpoint_every.is_some() {
            std::fs::create_dir_all(dir.join(CHECKPOINT_DIR))?;
        }
        std::fs::write(
            dir.join(CONFIG_JSON),
            serde_json::to_string_pretty(&self.cfg).map_err(|e| RunError::Serialize(e.to_string()))?,
        )?;
        let _ = std::fs::remove_file(dir.join(RUN_JSON));
        Ok(Sinks {
            dir: dir.to_path_buf(),
            jsonl: BufWriter::new(File::create(dir.join(REPORTS_JSONL))?),
        })
    }

    fn abort(
        &self,
        iteration: u64,
        payload: Box<dyn std::any::Any + Send>,
        reports: Vec<IterationReport>,
        sinks: &mut Option<Sinks>,
    ) -> RunError {
        let message = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into());
        log::error!("worker panic in iteration {iteration}: {message}");
        if let Some(s) = sinks.as_mut() {
            let _ = s.jsonl.flush();
            let _ = write_reports_csv(&s.dir.join(REPORTS_CSV), &reports);
        }
        RunError::WorkerPanic {
            iteration,
            message,
            reports,
        }
    }

    /// Offspring genotypes, their operator tags, and the number of aborted
    /// crossovers for one iteration.
    fn produce(
        &self,
        iteration: u64,
        archive: &Archive,
        buffer: &ReplayBuffer,
    ) -> Result<(Vec<Genotype>, Vec<OperatorTag>, u64), RunError> {
        let cfg = &self.cfg;
        let k = cfg.batch_size;
        if iteration == 0 {
            let genotypes = (0..k)
                .into_par_iter()
                .map(|i| {
                    let mut r = rng::stream(cfg.seed, 0, i as u64, Purpose::Init);
                    self.policy.init_genotype_with(&mut r)
                })
                .collect();
            return Ok((genotypes, vec![OperatorTag::Init; k], 0));
        }

        let g = cfg.ga_count();
        let jobs = (0..k)
            .map(|slot| self.select(iteration, slot, slot < g, archive, buffer))
            .collect::<Result<Vec<_>, RunError>>()?;

        let spec = &self.policy;
        let results: Vec<(Genotype, OperatorTag, bool)> = jobs
            .into_par_iter()
            .enumerate()
            .map(|(slot, job)| -> Result<_, RunError> {
                Ok(match job {
                    Job::Isoline(a, b) => {
                        let mut r = rng::stream(cfg.seed, iteration, slot as u64, Purpose::Mutation);
                        let child = isoline_dd(&a.genotype, &b.genotype, &cfg.operators.isoline, &mut r)?;
                        (child, OperatorTag::Isoline, false)
                    }
                    Job::Ascii(parent, target) => {
                        let out = match target {
                            Target::Buffer(t) => ascii_mutate(parent, &t, spec, &cfg.operators.ascii)?,
                            Target::Elite(e) => ascii_mutate(
                                parent,
                                &Trajectory::from_elite(e, spec),
                                spec,
                                &cfg.operators.ascii,
                            )?,
                        };
                        (out.genotype, OperatorTag::Ascii, out.aborted)
                    }
                })
            })
            .collect::<Result<_, RunError>>()?;

        let aborts = results.iter().filter(|r| r.2).count() as u64;
        let (genotypes, tags) = results.into_iter().map(|(g, t, _)| (g, t)).unzip();
        Ok((genotypes, tags, aborts))
    }

    fn select<'a>(
        &self,
        iteration: u64,
        slot: usize,
        isoline: bool,
        archive: &'a Archive,
        buffer: &ReplayBuffer,
    ) -> Result<Job<'a>, RunError> {
        let mut r = rng::stream(self.cfg.seed, iteration, slot as u64, Purpose::Selection);
        let parent = archive.sample_one(&mut r)?;
        if isoline {
            return Ok(Job::Isoline(parent, archive.sample_one(&mut r)?));
        }
        let target = match self.cfg.buffer.source_mode {
            SourceMode::Buffer => Target::Buffer(buffer.sample_one(&mut r)?),
            SourceMode::Archive => Target::Elite(archive.sample_one(&mut r)?),
        };
        Ok(Job::Ascii(parent, target))
    }
}

pub fn write_reports_csv(path: &Path, reports: &[IterationReport]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| RunError::Serialize(e.to_string()))?;
    for r in reports {
        w.serialize(ReportRow::from(r))
            .map_err(|e| RunError::Serialize(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn write_final(
    dir: &Path,
    reports: &[IterationReport],
    summary: &RunSummary,
    archive: &Archive,
) -> Result<(), RunError> {
    write_reports_csv(&dir.join(REPORTS_CSV), reports)?;
    archive.save_snapshot(&dir.join(ARCHIVE_SNAPSHOT))?;
    archive.write_summary(&dir.join(ARCHIVE_SUMMARY))?;
    // written last: its presence marks the run as complete
    std::fs::write(
        dir.join(RUN_JSON),
        serde_json::to_string_pretty(summary).map_err(|e| RunError::Serialize(e.to_string()))?,
    )?;
    Ok(())
}

/// Read the per-iteration reports of a run directory.
pub fn read_reports(path: &Path) -> Result<Vec<IterationReport>, RunError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| RunError::Serialize(e.to_string())))
        .collect()
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use asciime::archive::Centroids;
use asciime::bench::{self, SweepAxis, SweepSpec};
use asciime::config::{ConfigError, RunConfig};
use asciime::scheduler::{RunError, Runner};

/// Directory under which outputs go when `--out` is not given.
const OUTPUT_ROOT_VAR: &str = "ASCIIME_OUTPUT_ROOT";

const EXIT_CONFIG: u8 = 2;
const EXIT_PARTIAL: u8 = 3;
const EXIT_NOTHING: u8 = 4;

#[derive(Parser)]
#[command(name = "asciime", version, about = "MAP-Elites with action-sequence crossover")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Run config, `.toml` or `.json`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set operators.ascii.e=16`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (default: under $ASCIIME_OUTPUT_ROOT or ./results).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SeedArgs {
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0u64, 1, 2, 3, 4])]
    seeds: Vec<u64>,
    /// Run the sweep's runs concurrently; runtimes become non-comparable.
    #[arg(long)]
    parallel: bool,
}

#[derive(Subcommand)]
enum Command {
    /// One run; writes reports, checkpoints and the final archive.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// One run per (value, seed) along an axis.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// batch_size, ga_fraction or source_mode.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[command(flatten)]
        seeds: SeedArgs,
    },
    /// Sweep over the share of Iso+LineDD offspring.
    AblateGa {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.25, 0.5, 0.75, 1.0])]
        values: Vec<f64>,
        #[command(flatten)]
        seeds: SeedArgs,
    },
    /// Crossover targets from the replay buffer versus from archive elites.
    AblateSource {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        seeds: SeedArgs,
    },
    /// Generate (or load from cache) the CVT centroids of a config.
    Centroids {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Tables from a directory of runs.
    Report {
        results_dir: PathBuf,
        /// Where to write the tables (default: <results_dir>/report).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Other(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => Failure::Config(c.to_string()),
            other => Failure::Other(other.to_string()),
        }
    }
}

impl From<bench::BenchError> for Failure {
    fn from(e: bench::BenchError) -> Self {
        match e {
            bench::BenchError::Config(c) => Failure::Config(c.to_string()),
            bench::BenchError::Invalid(m) => Failure::Config(m),
            other => Failure::Other(other.to_string()),
        }
    }
}

impl From<asciime::archive::ArchiveError> for Failure {
    fn from(e: asciime::archive::ArchiveError) -> Self {
        Failure::Other(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn out_dir(args: &ConfigArgs, default_name: String) -> PathBuf {
    args.out.clone().unwrap_or_else(|| output_root().join(default_name))
}

fn load(args: &ConfigArgs) -> Result<RunConfig, Failure> {
    Ok(RunConfig::load(args.config.as_deref(), &args.set)?)
}

fn run_name(cfg: &RunConfig) -> String {
    format!(
        "{}_k{}_ga{}_seed{}",
        cfg.env.name(),
        cfg.batch_size,
        cfg.ga_fraction,
        cfg.seed
    )
}

fn sweep(base: RunConfig, axis: SweepAxis, values: Vec<Value>, seeds: SeedArgs, out: &Path) -> Result<u8, Failure> {
    let spec = SweepSpec {
        base,
        axis,
        values,
        seeds: seeds.seeds,
        parallel: seeds.parallel,
    };
    let outcome = bench::run_sweep(&spec, out)?;
    println!("value\truns\tfailed\tqd_median\tcoverage_median");
    for a in &outcome.aggregates {
        println!(
            "{}\t{}\t{}\t{}\t{}",
            a.value,
            a.runs,
            a.failed,
            a.qd_median.map_or("-".into(), |v| format!("{v:.3}")),
            a.coverage_median.map_or("-".into(), |v| format!("{v:.2}"))
        );
    }
    println!("results in {}", out.display());
    if outcome.failed() > 0 {
        eprintln!("{} of {} runs failed", outcome.failed(), outcome.records.len());
        return Ok(EXIT_PARTIAL);
    }
    Ok(0)
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn execute(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Run { cfg } => {
            let config = load(&cfg)?;
            let dir = out_dir(&cfg, format!("runs/{}", run_name(&config)));
            let result = Runner::new(config)?.with_output_dir(&dir).run()?;
            let s = &result.summary;
            println!(
                "{} evaluations in {:.2}s: qd_score {:.3}, coverage {:.2}%, max_fitness {}",
                s.evaluations,
                s.runtime_secs,
                s.qd_score,
                s.coverage,
                s.max_fitness.map_or("-".into(), |m| format!("{m:.3}"))
            );
            println!("results in {}", dir.display());
            Ok(0)
        }
        Command::Sweep {
            cfg,
            axis,
            values,
            seeds,
        } => {
            let base = load(&cfg)?;
            let dir = out_dir(&cfg, format!("sweeps/{}_{}", base.env.name(), axis.name()));
            sweep(base, axis, values.iter().map(|v| parse_value(v)).collect(), seeds, &dir)
        }
        Command::AblateGa { cfg, values, seeds } => {
            let base = load(&cfg)?;
            let dir = out_dir(&cfg, format!("ablations/{}_ga", base.env.name()));
            let values = values.into_iter().map(Value::from).collect();
            sweep(base, SweepAxis::GaFraction, values, seeds, &dir)
        }
        Command::AblateSource { cfg, seeds } => {
            let base = load(&cfg)?;
            let dir = out_dir(&cfg, format!("ablations/{}_source", base.env.name()));
            let values = vec![Value::from("buffer"), Value::from("archive")];
            sweep(base, SweepAxis::SourceMode, values, seeds, &dir)
        }
        Command::Centroids { cfg } => {
            let config = load(&cfg)?;
            let env = config.env.build().map_err(|e| Failure::Config(e.to_string()))?;
            let bounds = &env.spec().descriptor_bounds;
            let a = &config.archive;
            let dir = cfg.out.clone().unwrap_or_else(|| output_root().join("centroids"));
            let c = Centroids::load_or_generate(&dir, a.num_centroids, bounds, a.centroid_seed)?;
            let path = Centroids::cache_path(&dir, a.num_centroids, bounds, a.centroid_seed);
            println!(
                "{} centroids in {} dimensions for {} written to {}",
                c.len(),
                c.dim(),
                config.env.name(),
                path.display()
            );
            Ok(0)
        }
        Command::Report { results_dir, out } => {
            let out = out.unwrap_or_else(|| results_dir.join("report"));
            let outcome = bench::report(&results_dir, &out)?;
            for i in &outcome.issues {
                eprintln!("warning: {}: {}", i.run, i.problem);
            }
            if outcome.nothing_to_report() {
                eprintln!("no runs found under {}", results_dir.display());
                return Ok(EXIT_NOTHING);
            }
            println!(
                "{} runs ({} complete); tables in {}",
                outcome.runs_found,
                outcome.complete_runs,
                out.display()
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::FAILURE
        }
    }
}

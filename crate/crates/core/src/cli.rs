//! Command-line front end: `run`, `validate`, `export-plots`, `replay`.
//!
//! Exit codes: 0 success, 1 a check failed, 2 configuration or input
//! error, 3 solver failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use serde::Serialize;

use crate::cases::{build, Example, ExampleConfig, ExampleId};
use crate::closed_loop::{costs_csv, run_campaign, write_artifacts, Campaign};
use crate::error::Error;
use crate::validation::{box_preservation, monotonicity, round_trip, BoxPreservationReport, MonotonicityReport, RoundTripReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "lmpc", version, about = "Learning MPC over lifted outputs")]
pub struct Cli {
    /// Only print errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Source {
    /// JSON configuration file.
    #[arg(long, conflicts_with = "example", required_unless_present = "example")]
    pub config: Option<PathBuf>,
    /// Built-in example with default settings (pwa, dc_motor, unicycle).
    #[arg(long)]
    pub example: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a campaign and write its artifacts.
    Run {
        #[command(flatten)]
        source: Source,
        /// Artifact directory.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Recorded with the run; campaigns are deterministic.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Iteration count including the seed trajectory.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Sampled round-trip, convex-combination and monotonicity checks.
    Validate {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random rollouts for the round trip.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Random convex combinations.
        #[arg(long, default_value_t = 10_000)]
        combinations: usize,
        /// Write the full report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Derive the per-figure CSV files from a finished run.
    ExportPlots {
        /// Run directory written by `run`.
        #[arg(long)]
        run: PathBuf,
        /// Defaults to `<run>/plots`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a finished campaign from its stored configuration and compare
    /// the cost table byte for byte.
    Replay {
        #[arg(long)]
        run: PathBuf,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => EXIT_CONFIG,
        Error::ClosedLoop(_) | Error::SafeSet(_) => EXIT_CHECK,
        Error::System(_) | Error::Qp(_) | Error::Nlp(_) | Error::Solver(_) => EXIT_SOLVER,
    }
}

fn load_source(s: &Source) -> Result<ExampleConfig, Error> {
    match (&s.config, &s.example) {
        (Some(path), _) => Ok(ExampleConfig::load(path)?),
        (None, Some(name)) => Ok(ExampleConfig::new(name.parse::<ExampleId>()?)),
        (None, None) => unreachable!("clap requires one source"),
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.quiet);
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn init_logging(quiet: bool) {
    let default = if quiet { "error" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("LMPC_LOG", default)).try_init();
}

fn say(quiet: bool, line: impl AsRef<str>) {
    if !quiet {
        println!("{}", line.as_ref());
    }
}

fn execute(cli: &Cli) -> Result<i32, Error> {
    let q = cli.quiet;
    match &cli.command {
        Command::Run { source, out, seed, iterations } => {
            let mut config = load_source(source)?;
            if let Some(j) = iterations {
                config.overrides.j_max = Some(*j);
            }
            let ex = build(&config)?;
            let campaign =
                run_campaign(&ex, |r| say(q, format!("iteration {:>3}  cost {:<24}  steps {}", r.iteration, format!("{:.10e}", r.cost), r.inputs.len())))?;
            write_artifacts(out, &ex, &config, &campaign)?;
            fs::write(out.join("run.json"), serde_json::to_string_pretty(&serde_json::json!({ "seed": seed }))?)?;
            say(q, format!("artifacts written to {}", out.display()));
            Ok(report_campaign(&campaign))
        }
        Command::Validate { source, seed, samples, combinations, out } => {
            let ex = build(&load_source(source)?)?;
            let report = validate(&ex, *seed, *samples, *combinations);
            say(
                q,
                format!(
                    "round trip: {} rollouts, state error {:.3e}, input error {:.3e} (tolerance {:.0e}): {}",
                    report.round_trip.samples,
                    report.round_trip.max_state_error,
                    report.round_trip.max_input_error,
                    report.round_trip.tolerance,
                    verdict(report.round_trip.passed())
                ),
            );
            say(
                q,
                format!(
                    "convex combinations: {} drawn, {} infeasible (max excess {:.3e}): {}",
                    report.combinations.combinations,
                    report.combinations.violations,
                    report.combinations.max_violation,
                    verdict(report.combinations.passed())
                ),
            );
            for (name, r) in [("state map", &report.monotonicity.state_map), ("input map", &report.monotonicity.input_map)] {
                let flags: Vec<String> = r.components.iter().map(|c| format!("{}:{}", c.index, if c.monotone { "monotone" } else { "not monotone" })).collect();
                say(q, format!("{name} on {} lines: {}", r.lines_tested, flags.join(", ")));
            }
            if let Some(path) = out {
                fs::write(path, serde_json::to_string_pretty(&report)?)?;
            }
            Ok(if report.round_trip.passed() && report.combinations.passed() { EXIT_OK } else { EXIT_CHECK })
        }
        Command::ExportPlots { run, out } => {
            let dir = out.clone().unwrap_or_else(|| run.join("plots"));
            let written = export_plots(run, &dir)?;
            for f in written {
                say(q, format!("wrote {}", f.display()));
            }
            Ok(EXIT_OK)
        }
        Command::Replay { run } => {
            let config = ExampleConfig::load(&run.join("config.json"))?;
            let stored = fs::read_to_string(run.join("costs.csv"))?;
            let ex = build(&config)?;
            let campaign = run_campaign(&ex, |_| {})?;
            let fresh = costs_csv(&campaign.costs());
            if fresh == stored {
                say(q, "costs.csv reproduced exactly");
                Ok(report_campaign(&campaign))
            } else {
                eprintln!("replayed costs differ from {}", run.join("costs.csv").display());
                Ok(EXIT_CHECK)
            }
        }
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

fn report_campaign(c: &Campaign) -> i32 {
    match &c.failure {
        None => EXIT_OK,
        Some(why) => {
            eprintln!("check failed: {why}");
            EXIT_CHECK
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub example: String,
    pub seed: u64,
    pub round_trip: RoundTripReport,
    pub combinations: BoxPreservationReport,
    pub monotonicity: MonotonicityReport,
}

pub fn validate(ex: &Example, seed: u64, samples: usize, combinations: usize) -> ValidationReport {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    ValidationReport {
        example: ex.id.as_str().to_string(),
        seed,
        round_trip: round_trip(ex, samples, &mut rng),
        combinations: box_preservation(ex, combinations, &mut rng),
        monotonicity: monotonicity(ex, 500, 50, &mut rng),
    }
}

/// Column selections per figure: `(file, [(source column, output name)])`.
fn figure_columns(id: ExampleId) -> Vec<(&'static str, Vec<(&'static str, &'static str)>)> {
    match id {
        ExampleId::Pwa => vec![("pwa_state.csv", vec![("x0", "x1"), ("x1", "x2"), ("u0", "u")])],
        ExampleId::DcMotor => {
            vec![("dc_traces.csv", vec![("x0", "current"), ("x2", "speed"), ("u1", "voltage")]), ("dc_field_current.csv", vec![("u0", "field_current")])]
        }
        ExampleId::Unicycle => vec![("uni_paths.csv", vec![("x0", "x"), ("x1", "y"), ("x2", "heading")]), ("uni_speed.csv", vec![("u0", "v"), ("u1", "w")])],
    }
}

/// Writes the per-figure CSV files for the run in `run` into `out`. Every
/// file has `j, t, final` followed by the figure's columns; `final` marks
/// the last iteration.
pub fn export_plots(run: &Path, out: &Path) -> Result<Vec<PathBuf>, Error> {
    let config = ExampleConfig::load(&run.join("config.json"))?;
    let id = config.id()?;
    let mut reader = csv::Reader::from_path(run.join("trajectories.csv"))?;
    let header = reader.headers()?.clone();
    let rows: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>()?;
    let col = |name: &str| -> Result<usize, Error> {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Config(crate::error::ConfigError::Parse(format!("trajectories.csv has no column `{name}`"))))
    };
    let (jc, tc) = (col("j")?, col("t")?);
    let last = rows.iter().filter_map(|r| r[jc].parse::<usize>().ok()).max().unwrap_or(0);
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for (file, cols) in figure_columns(id) {
        let idx: Vec<usize> = cols.iter().map(|(c, _)| col(c)).collect::<Result<_, _>>()?;
        let path = out.join(file);
        let mut w = csv::Writer::from_path(&path)?;
        let mut head = vec!["j", "t", "final"];
        head.extend(cols.iter().map(|(_, n)| *n));
        w.write_record(&head)?;
        for r in &rows {
            let is_final = r[jc].parse::<usize>().ok() == Some(last);
            let mut rec = vec![r[jc].to_string(), r[tc].to_string(), (is_final as u8).to_string()];
            rec.extend(idx.iter().map(|&i| r[i].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

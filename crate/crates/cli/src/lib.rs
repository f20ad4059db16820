//! The `ripple` command line: seed courses, generate synthetic cohorts, serve
//! the API and evaluate knowledge tracing and peer matching.
//!
//! Reports go to stdout as JSON. Exit codes: 0 success, 1 validation
//! failure, 2 I/O failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ripple_core::sim::{
    self, CohortSpec, EvaluateError, EvaluationReport, GenerateError, GroundTruthParams, SeedError,
};
use ripple_core::{CourseId, EngineConfig, EventStore, Hyperparameters, LogError, Timestamp};
use ripple_server::{ServeError, ServerConfig};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "ripple", version, about = "Peer-learning engine: seeding, simulation, evaluation and serving")]
pub struct Cli {
    /// Directory holding one `<course>.jsonl` log per course.
    #[arg(long, global = true, env = "DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
    /// Seed for generation, model fitting and token issuing.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Course code.
    #[arg(long, global = true, default_value = "SIM101")]
    pub course: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Append topics and questions from a seed file, creating the course if needed.
    Seed {
        /// Seed file: {"topics": [..], "questions": [..]}.
        file: PathBuf,
        /// Course display name.
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        host: Option<String>,
    },
    /// Write a synthetic cohort log and its holdout file into the data directory.
    Generate(GenerateArgs),
    /// Run the HTTP API.
    Serve {
        /// Overrides API_PORT.
        #[arg(long)]
        port: Option<u16>,
    },
    /// Fit on the training log and score the holdout.
    EvaluateKt {
        /// Defaults to `<data-dir>/<course>.jsonl`.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Defaults to `<data-dir>/<course>.holdout.jsonl`.
        #[arg(long)]
        holdout: Option<PathBuf>,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Run the peer matcher for every requesting user and check its output.
    EvaluatePeers {
        #[arg(long)]
        log: Option<PathBuf>,
        /// Recommendations per user.
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Write the consent-filtered CSV export.
    Export {
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 200)]
    pub students: usize,
    #[arg(long, default_value_t = 100)]
    pub questions: usize,
    #[arg(long, default_value_t = 5)]
    pub topics: usize,
    #[arg(long, default_value_t = 40)]
    pub answers: usize,
    #[arg(long, default_value_t = 0.2)]
    pub holdout_fraction: f64,
    /// Leave out availability, preferences and peer requests.
    #[arg(long)]
    pub no_peers: bool,
}

#[derive(Debug, Args)]
pub struct HyperArgs {
    /// Latent dimension.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub reg: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

impl HyperArgs {
    fn resolve(&self, seed: Option<u64>) -> Hyperparameters {
        let d = Hyperparameters::default();
        Hyperparameters {
            k: self.k.unwrap_or(d.k),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            reg: self.reg.unwrap_or(d.reg),
            epochs: self.epochs.unwrap_or(d.epochs),
            rng_seed: seed.unwrap_or(d.rng_seed),
        }
    }
}

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Io(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Io(m) => m,
        }
    }
}

impl From<LogError> for Failure {
    fn from(e: LogError) -> Self {
        match e {
            LogError::StorageFailure(_) => Failure::Io(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<SeedError> for Failure {
    fn from(e: SeedError) -> Self {
        match e {
            SeedError::Parse { .. } => Failure::Validation(e.to_string()),
            SeedError::Io { .. } => Failure::Io(e.to_string()),
            SeedError::Log(e) => e.into(),
        }
    }
}

impl From<GenerateError> for Failure {
    fn from(e: GenerateError) -> Self {
        match e {
            GenerateError::Spec(_) => Failure::Validation(e.to_string()),
            GenerateError::Io { .. } => Failure::Io(e.to_string()),
            GenerateError::Log(e) => e.into(),
        }
    }
}

impl From<EvaluateError> for Failure {
    fn from(e: EvaluateError) -> Self {
        match e {
            EvaluateError::FileNotFound(_) => Failure::Io(e.to_string()),
            EvaluateError::Log(e) => e.into(),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<ServeError> for Failure {
    fn from(e: ServeError) -> Self {
        match e {
            ServeError::BadDataDir { .. } => Failure::Validation(e.to_string()),
            ServeError::PortInUse(_) | ServeError::Io(_) => Failure::Io(e.to_string()),
        }
    }
}

fn io(e: std::io::Error) -> Failure {
    Failure::Io(e.to_string())
}

fn emit<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("reports serialise");
    writeln!(out, "{text}").map_err(io)
}

#[derive(Debug, Serialize)]
pub struct GenerateReport {
    pub course: CourseId,
    pub log: PathBuf,
    pub holdout: PathBuf,
    pub events: usize,
    pub answer_events: usize,
    pub holdout_events: usize,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct ExportReport {
    pub course: CourseId,
    pub out: PathBuf,
    pub rows: usize,
}

fn course_log(data_dir: &Path, course: &CourseId, explicit: Option<PathBuf>) -> PathBuf {
    explicit.unwrap_or_else(|| EventStore::log_path(data_dir, course))
}

/// Runs one command, writing its report to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let course = CourseId::new(cli.course.trim());
    if course.as_str().is_empty() {
        return Err(Failure::Validation("course code must not be empty".into()));
    }
    match cli.command {
        Command::Seed { file, name, host } => {
            std::fs::create_dir_all(&cli.data_dir).map_err(io)?;
            let mut store = EventStore::open(&cli.data_dir)?;
            let name = name.unwrap_or_else(|| course.to_string());
            let report = sim::seed_course(&mut store, &name, &course, &file, host.as_deref(), Timestamp::now())?;
            emit(out, &report)
        }
        Command::Generate(g) => {
            let spec = CohortSpec {
                course: course.clone(),
                n_students: g.students,
                n_questions: g.questions,
                n_topics: g.topics,
                answers_per_student: g.answers,
                holdout_fraction: g.holdout_fraction,
                peer_activity: !g.no_peers,
                truth: GroundTruthParams::default(),
                seed: cli.seed.unwrap_or(DEFAULT_SEED),
            };
            spec.validate().map_err(|e| Failure::Validation(e.to_string()))?;
            if EventStore::log_path(&cli.data_dir, &course).exists() {
                return Err(Failure::Validation(format!(
                    "course {course} already exists in {}",
                    cli.data_dir.display()
                )));
            }
            let (log, holdout, cohort) = sim::write_cohort(&cli.data_dir, &spec)?;
            let answer_events = cohort
                .events
                .iter()
                .filter(|e| matches!(e.kind, ripple_core::EventKind::AnswerSubmitted { .. }))
                .count();
            emit(
                out,
                &GenerateReport {
                    course,
                    log,
                    holdout,
                    events: cohort.events.len(),
                    answer_events,
                    holdout_events: cohort.holdout.len(),
                    seed: spec.seed,
                },
            )
        }
        Command::Serve { port } => {
            let mut config = ServerConfig::from_env().map_err(|e| Failure::Validation(e.to_string()))?;
            config.data_dir = cli.data_dir;
            if let Some(seed) = cli.seed {
                config = config.with_seed(seed);
            }
            if let Some(port) = port {
                config.port = port;
            }
            let runtime = tokio::runtime::Runtime::new().map_err(io)?;
            runtime.block_on(ripple_server::serve(config))?;
            Ok(())
        }
        Command::EvaluateKt { log, holdout, hyper } => {
            let log = course_log(&cli.data_dir, &course, log);
            let holdout = holdout.unwrap_or_else(|| sim::holdout_path(&cli.data_dir, &course));
            let report: EvaluationReport = sim::evaluate_kt(&log, &holdout, &hyper.resolve(cli.seed))?;
            emit(out, &report)
        }
        Command::EvaluatePeers { log, k } => {
            if k == 0 {
                return Err(Failure::Validation("k must be at least 1".into()));
            }
            let log = course_log(&cli.data_dir, &course, log);
            let mut config = EngineConfig::default();
            config.hyper.rng_seed = cli.seed.unwrap_or(config.hyper.rng_seed);
            let report = sim::evaluate_peers(&log, k, &config)?;
            emit(out, &report)?;
            if report.violations > 0 || report.oracle_agreement == Some(false) {
                return Err(Failure::Validation(format!(
                    "{} constraint violations, oracle agreement {:?}",
                    report.violations, report.oracle_agreement
                )));
            }
            Ok(())
        }
        Command::Export { out: target } => {
            let path = EventStore::log_path(&cli.data_dir, &course);
            let log = sim::open_log(&path)?;
            let csv = log.export_csv();
            match target {
                None => match out.write_all(csv.as_bytes()) {
                    Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(io(e)),
                    _ => Ok(()),
                },
                Some(target) => {
                    std::fs::write(&target, &csv).map_err(io)?;
                    let rows = csv.lines().count().saturating_sub(1);
                    emit(out, &ExportReport { course, out: target, rows })
                }
            }
        }
    }
}

/// Parses arguments, runs, and maps the outcome to an exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli, out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}

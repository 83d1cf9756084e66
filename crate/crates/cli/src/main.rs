//! `wishartlab` command line front end.
//!
//! Every command reads a JSON experiment config, writes a JSON report (and
//! CSV for bulk output) to the output directory and echoes the report on
//! stdout. Failures print a JSON error object on stderr.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;

use commands::{Context, Outcome};
use config::{Command, ExperimentConfig, SCHEMA_VERSION};
use output::{ensure_dir, resolve, write_json, Header, Report};

const DEFAULT_SEED: u64 = 42;

#[derive(Parser, Debug)]
#[command(name = "wishartlab", version, about = "Wishart distributions and processes")]
struct Cli {
    /// Command to run; may instead be given as `command` in the config.
    #[arg(value_enum)]
    command: Option<Command>,

    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Overrides the config seed (default 42).
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads for path and sample parallelism.
    #[arg(long, env = "WISHARTLAB_THREADS")]
    threads: Option<usize>,

    /// Directory for reports and CSV files.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Io(String),
    Core(wishartlab::Error),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "UsageError",
            CliError::Config(_) => "ConfigError",
            CliError::Io(_) => "IoError",
            CliError::Core(e) => e.kind(),
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Config(m) | CliError::Io(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }
}

impl From<wishartlab::Error> for CliError {
    fn from(e: wishartlab::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: ErrorBody<'a>,
}

fn emit_error(e: &CliError) {
    let report = ErrorReport { error: ErrorBody { kind: e.kind(), message: e.message() } };
    eprintln!("{}", serde_json::to_string(&report).unwrap_or_else(|_| "{\"error\":{}}".into()));
}

fn resolve_command(cli: &Cli, config: &ExperimentConfig) -> Result<Command, CliError> {
    match (cli.command, config.command) {
        (Some(a), Some(b)) if a != b => Err(CliError::Usage(format!(
            "command `{}` conflicts with config command `{}`",
            a.name(),
            b.name()
        ))),
        (Some(a), _) => Ok(a),
        (None, Some(b)) => Ok(b),
        (None, None) => Err(CliError::Usage("no command given on the command line or in the config".into())),
    }
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig { schema_version: SCHEMA_VERSION, ..Default::default() },
    };
    let command = resolve_command(&cli, &config)?;
    if cli.config.is_none() && command != Command::Verify {
        return Err(CliError::Usage(format!("`{}` needs --config", command.name())));
    }
    let seed = cli.seed.or(config.seed).unwrap_or(DEFAULT_SEED);
    ensure_dir(&cli.out_dir)?;

    let ctx = Context { command, config: &config, seed, out_dir: &cli.out_dir };
    let Outcome { result, success } = commands::run(&ctx)?;
    let report = Report { header: Header::new(command), result: &result };
    let path = resolve(&cli.out_dir, &config.outputs.report, &format!("{}.json", command.name()));
    let text = write_json(&path, &report)?;
    println!("{text}");
    Ok(success)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or_default().trim_start_matches("error: ");
            emit_error(&CliError::Usage(first.to_string()));
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            emit_error(&e);
            ExitCode::from(2)
        }
    }
}

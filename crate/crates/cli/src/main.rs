//! Command-line harness: every command reads a JSON experiment config and
//! writes CSV (and circuit text) into the output directory.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use commands::Artifact;
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "opdyn", version, about = "Operator-theoretic forecasting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Sample a rotation trajectory.
    Rotate,
    /// Classical, quantum and projected filters side by side.
    Filter,
    /// Generator spectrum, evolution and Fock-space forecasts.
    Koopman,
    /// Simulated rotation circuit: resolution sweep and circuit export.
    Qcirc,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Rotate => "rotate",
            Command::Filter => "filter",
            Command::Koopman => "koopman",
            Command::Qcirc => "qcirc",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] opdyn::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(_) | CliError::Invalid(_) => 2,
            CliError::Io(_) => 1,
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Invalid("--config is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::parse(&text).map_err(|e| CliError::Invalid(e.to_string()))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.display().to_string();
    }
    Ok(cfg)
}

/// SHA-256 of the effective config with the output location left out.
fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut cfg = cfg.clone();
    cfg.output = Default::default();
    let canonical = serde_json::to_string(&cfg).expect("config serializes");
    Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_artifacts(dir: &Path, command: &str, hash: &str, artifacts: &[Artifact]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let stamp = format!(
        "opdyn-cli={} opdyn-core={} schema_version={} command={command} config_sha256={hash}",
        env!("CARGO_PKG_VERSION"),
        opdyn::VERSION,
        config::SCHEMA_VERSION
    );
    for a in artifacts {
        let prefix = if a.name.ends_with(".csv") { "#" } else { "//" };
        let body = format!("{prefix} {stamp}\n{}", a.body);
        let path = dir.join(a.name);
        std::fs::write(&path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load(cli)?;
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(CliError::Invalid("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Invalid(format!("--threads: {e}")))?;
    }
    let exec = match cli.threads {
        Some(1) => opdyn::Execution::Sequential,
        _ => opdyn::Execution::Parallel,
    };
    let artifacts = match cli.command {
        Command::Rotate => commands::rotate(&cfg)?,
        Command::Filter => commands::filter(&cfg)?,
        Command::Koopman => commands::koopman(&cfg, exec)?,
        Command::Qcirc => commands::qcirc(&cfg, exec)?,
    };
    write_artifacts(Path::new(&cfg.output.dir), cli.command.name(), &config_hash(&cfg), &artifacts)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code())
        }
    }
}

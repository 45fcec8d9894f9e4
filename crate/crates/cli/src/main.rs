//! `polyflow`: runs the solver and diagnostics from a JSON configuration.
//!
//! Exit status: 0 on success (including reported non-convergence), 2 on an
//! invalid configuration, 3 when a computation aborts on non-finite values,
//! 1 on any other failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::{FieldError, RunConfig};
use output::OutDir;

#[derive(Debug, Parser)]
#[command(name = "polyflow", version, about = "Polyharmonic map heat flow into the sphere")]
struct Cli {
    /// JSON run configuration; defaults apply to omitted keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for the test bank and random probes, overriding the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "POLYFLOW_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Kernel profiles, decay fits and L1 scaling tables.
    Kernel,
    /// Exponential time differencing run of the flow.
    Evolve,
    /// Picard iteration of the mild formulation.
    Picard,
    /// Norm report of a field or trajectory snapshot.
    Norms {
        #[arg(long)]
        input: PathBuf,
    },
    /// Contraction and ball-invariance probes around the free evolution.
    Probe,
    /// The full diagnostics suite.
    Verify,
    /// Print the effective configuration and exit.
    Config,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Kernel => "kernel",
            Command::Evolve => "evolve",
            Command::Picard => "picard",
            Command::Norms { .. } => "norms",
            Command::Probe => "probe",
            Command::Verify => "verify",
            Command::Config => "config",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration")]
    Config(Vec<FieldError>),
    #[error(transparent)]
    Compute(#[from] polyflow::Error),
    #[error(transparent)]
    Io(std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use polyflow::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(E::InvalidParameter { .. } | E::InvalidGrid(_) | E::NotTangent(_)) => 2,
            CliError::Compute(E::NanAbort { .. } | E::NonFinite { .. }) => 3,
            _ => 1,
        }
    }

    fn report(&self) -> serde_json::Value {
        match self {
            CliError::Config(errs) => json!({
                "error": "invalid configuration",
                "fields": errs.iter().map(|e| json!({ "field": e.field, "message": e.message })).collect::<Vec<_>>(),
            }),
            other => json!({ "error": other.to_string() }),
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| CliError::Config(vec![e]))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.flow.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(CliError::Config(errs));
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<serde_json::Value, CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Config(vec![FieldError {
                field: "threads".into(),
                message: "must be >= 1".into(),
            }]));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))?;
    }
    let cfg = load_config(cli)?;
    if let Command::Config = cli.command {
        return Ok(serde_json::to_value(&cfg).expect("config serializes"));
    }
    let mut out = OutDir::create(&cfg.out).map_err(CliError::Io)?;
    let result = match &cli.command {
        Command::Kernel => commands::kernel(&cfg, &mut out)?,
        Command::Evolve => commands::evolve(&cfg, &mut out)?,
        Command::Picard => commands::picard(&cfg, &mut out)?,
        Command::Norms { input } => commands::norms(&cfg, input, &mut out)?,
        Command::Probe => commands::probe(&cfg, &mut out)?,
        Command::Verify => commands::verify(&cfg, &mut out)?,
        Command::Config => unreachable!(),
    };
    Ok(json!({
        "command": cli.command.name(),
        "schema_version": config::SCHEMA_VERSION,
        "seed": cfg.flow.seed,
        "artifacts": out.artifacts(),
        "result": result,
    }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let mut report = e.report();
            report["command"] = json!(cli.command.name());
            eprintln!("polyflow {}: {e}", cli.command.name());
            if let CliError::Config(errs) = &e {
                for fe in errs {
                    eprintln!("  {fe}");
                }
            }
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            ExitCode::from(e.exit_code())
        }
    }
}

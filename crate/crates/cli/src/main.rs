#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use clap::Parser;
use commands::{dispatch, CliError, COMMANDS};
use config::{parse_config, parse_list, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_UNKNOWN_COMMAND: u8 = 64;

/// Free energies and fluctuations of radial two-dimensional Coulomb gases.
#[derive(Parser, Debug)]
#[command(name = "radgas", version)]
struct Cli {
    /// One of: droplet, functionals, free-energy, fluct, outpost, identities.
    command: String,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated particle numbers.
    #[arg(long = "n")]
    n: Option<String>,
    /// Comma-separated values of s.
    #[arg(long = "s", allow_hyphen_values = true)]
    s: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
            parse_config(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(v) = &cli.n {
        cfg.n = parse_list(v).map_err(|e| CliError::Validation(format!("--n: {e}")))?;
        if cfg.n.iter().any(|&k| k < 2) {
            return Err(CliError::Validation("--n values must be at least 2".into()));
        }
    }
    if let Some(v) = &cli.s {
        cfg.s = Some(parse_list(v).map_err(|e| CliError::Validation(format!("--s: {e}")))?);
    }
    if let Some(a) = cli.alpha {
        cfg.alpha = a;
    }
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = cli.samples {
        cfg.samples = v as usize;
    }
    if let Some(v) = &cli.out {
        cfg.out = v.clone();
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    if !(cfg.alpha > -1.0) {
        return Err(CliError::Validation(format!("alpha = {} must exceed -1", cfg.alpha)));
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = build_config(cli)?;
    if let Some(k) = cfg.workers {
        if k == 0 {
            return Err(CliError::Validation("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Validation(e.to_string()))?;
    }
    for f in dispatch(&cli.command, &cfg)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if !COMMANDS.contains(&cli.command.as_str()) {
        eprintln!("error: unknown command {:?}; expected one of {}", cli.command, COMMANDS.join(", "));
        return ExitCode::from(EXIT_UNKNOWN_COMMAND);
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use blowup_cli::manifest::RunManifest;
use blowup_cli::{cmd_analyze, cmd_report, cmd_shoot, cmd_simulate, cmd_validate, CliError, EXIT_ERROR};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "blowup", version, about = "Blow-up lab for a perturbed semilinear heat equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Manifest file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Survival horizon in similarity time.
    #[arg(long = "s-end")]
    s_end: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check parameters and print derived constants.
    Validate(Common),
    /// Integrate one (d0, d1) run.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        d0: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        d1: f64,
    },
    /// Scan and bisect for data that stays in the shrinking set.
    Shoot(Common),
    /// Verify a recorded trajectory.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Directory holding modes.csv, metrics.csv, snapshots.csv, kicks.csv.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// validate, shoot and analyze into one directory.
    Report(Common),
}

fn manifest(c: &Common) -> Result<RunManifest, CliError> {
    let mut m = match &c.config {
        Some(p) => RunManifest::from_file(p)?,
        None => RunManifest::default(),
    };
    if let Some(o) = &c.out {
        m.out = o.clone();
    }
    if let Some(s) = c.s_end {
        m.s_end = Some(s);
    }
    if let Some(w) = c.workers {
        m.workers = w.max(1);
    }
    if let Some(s) = c.seed {
        m.seed = s;
    }
    m.check_ranges()?;
    Ok(m)
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let mut out = std::io::stdout();
    match cli.command {
        Command::Validate(c) => Ok(cmd_validate(&manifest(&c)?, &mut out)),
        Command::Simulate { common, d0, d1 } => cmd_simulate(&manifest(&common)?, d0, d1, &mut out),
        Command::Shoot(c) => cmd_shoot(&manifest(&c)?, &mut out),
        Command::Analyze { common, trajectory } => {
            let m = manifest(&common)?;
            let dir = trajectory.unwrap_or_else(|| m.out.clone());
            cmd_analyze(&m, &dir, &mut out)
        }
        Command::Report(c) => cmd_report(&manifest(&c)?, &mut out),
    }
}

fn main() -> ExitCode {
    let code = match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code().max(EXIT_ERROR)
        }
    };
    ExitCode::from(code as u8)
}

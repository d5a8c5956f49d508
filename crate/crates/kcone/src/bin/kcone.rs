use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kcone::cli::{cmd_analyze, cmd_example, cmd_trace, cmd_verify, Status};
use kcone::problem::BUNDLED;
use kcone::suites::{Corruption, VerifyConfig};

/// Fine resolutions and k-transversal cones for singular polynomial systems.
#[derive(Parser)]
#[command(name = "kcone", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a problem file and write a JSON report.
    Analyze {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the exact identity suites on seeded random instances.
    Verify {
        /// Largest order k; instances cycle through 1..=k.
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Replace one d-scheme entry, given as `m,l,value`.
        #[arg(long, value_name = "M,L,VALUE")]
        corrupt_d: Option<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write the rate trace of a problem as CSV.
    Trace {
        input: PathBuf,
        /// `hi:lo:points`; empty selects the default grid.
        #[arg(long)]
        grid: Option<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Analyze a bundled problem.
    Example {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(BUNDLED))]
        name: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn parse_corruption(spec: &str) -> Result<Corruption, kcone::KconeError> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    let bad = || kcone::KconeError::Input(format!("--corrupt-d expects m,l,value, got {spec:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    Ok(Corruption {
        m: parts[0].parse().map_err(|_| bad())?,
        l: parts[1].parse().map_err(|_| bad())?,
        value: parts[2].to_string(),
    })
}

fn configure_threads() {
    if let Some(n) = std::env::var("KCONE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn run(cli: Cli) -> Result<Status, kcone::KconeError> {
    match cli.command {
        Command::Analyze { input, output } => Ok(cmd_analyze(&input, output.as_deref())?.status),
        Command::Example { name, output } => Ok(cmd_example(&name, output.as_deref())?.status),
        Command::Trace { input, grid, output } => {
            cmd_trace(&input, grid.as_deref(), output.as_deref())?;
            Ok(Status::Ok)
        }
        Command::Verify { k, count, seed, corrupt_d, output } => {
            let config = VerifyConfig {
                k_values: (1..=k).collect(),
                count,
                seed,
                corruption: corrupt_d.as_deref().map(parse_corruption).transpose()?,
                ..VerifyConfig::default()
            };
            let report = cmd_verify(&config, output.as_deref())?;
            for s in &report.suites {
                let state = if s.holds() { "pass" } else { "FAIL" };
                eprintln!("{state} {:<20} checked {:>4}  vacuous {:>4}  failed {:>4}", s.name, s.checked, s.vacuous, s.failed);
                if let Some(c) = &s.first_failure {
                    eprintln!("     first counterexample: {} (k={}): {}", c.instance, c.k, c.detail);
                }
            }
            Ok(if report.all_hold { Status::Ok } else { Status::NumericFailure })
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    let status = match run(cli) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("kcone: {e}");
            Status::of_error(&e)
        }
    };
    ExitCode::from(status.exit_code() as u8)
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use nse3d::app::{self, Setup, SyncOverrides};
use nse3d::config::Config;
use nse3d::{par, Error};

/// Pseudo-spectral Navier-Stokes on the 3-torus with Littlewood-Paley
/// diagnostics. Thread count comes from NSE3D_THREADS.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver and write snapshots, CSV tables and a manifest.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute diagnostics and window tables from a snapshot directory.
    Diagnose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        snapshots: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the two-trajectory synchronization harness.
    Sync {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        perturb_shell: Option<i32>,
        #[arg(long)]
        perturb_amp: Option<f64>,
        /// adaptive | fixed:<Q> | off
        #[arg(long)]
        enforce: Option<String>,
        /// Exit with status 4 unless the decay bound holds.
        #[arg(long)]
        check: bool,
    },
    /// Calibrate the Bernstein constant C_B.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Random fields added to the extremal samples.
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Brute-force determining wavenumbers of a run's snapshots against its
    /// diagnostics table; exits with status 4 on any mismatch.
    Oracle {
        /// Output directory of `simulate`.
        #[arg(long)]
        run: PathBuf,
        /// Defaults to the run's own config.toml.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Re-read every file listed in a run manifest; exits with status 4 on
    /// any checksum mismatch.
    Verify {
        #[arg(long)]
        run: PathBuf,
    },
}

enum Failure {
    Module(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Module(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::Validation(_) => 2,
        Error::NonFinite { .. } | Error::CflViolation { .. } => 3,
        _ => 1,
    }
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    exit_code: u8,
    message: String,
}

fn print_json<T: Serialize>(v: &T) {
    println!("{}", serde_json::to_string(v).expect("summary serializes"));
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Simulate { config, out } => {
            let setup = Setup::load(&config)?;
            print_json(&app::simulate(&setup, &out)?);
        }
        Command::Diagnose {
            config,
            snapshots,
            out,
        } => {
            let setup = Setup::load(&config)?;
            print_json(&app::diagnose(&setup, &snapshots, &out)?);
        }
        Command::Sync {
            config,
            out,
            perturb_shell,
            perturb_amp,
            enforce,
            check,
        } => {
            let setup = Setup::load(&config)?;
            let overrides = SyncOverrides {
                perturb_shell,
                perturb_amp,
                enforce,
            };
            let summary = app::run_sync(&setup, &overrides, &out)?;
            print_json(&summary);
            if check && !summary.passes() {
                return Err(Failure::Check(
                    "synchronization decay bound violated".into(),
                ));
            }
        }
        Command::Calibrate {
            config,
            out,
            samples,
            seed,
        } => {
            let setup = Setup::load(&config)?;
            print_json(&app::calibrate(&setup, samples, seed, &out)?);
        }
        Command::Oracle { run, config } => {
            let path = config.unwrap_or_else(|| run.join("config.toml"));
            let setup = Setup::new(Config::load(&path)?)?;
            let report = app::oracle(&setup, &run)?;
            print_json(&report);
            if !report.mismatches.is_empty() {
                return Err(Failure::Check(format!(
                    "{} oracle mismatches",
                    report.mismatches.len()
                )));
            }
        }
        Command::Verify { run } => {
            let bad = app::verify_manifest(&run)?;
            print_json(&bad);
            if !bad.is_empty() {
                return Err(Failure::Check(format!(
                    "{} files fail their checksum",
                    bad.len()
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    par::init_threads_from_env();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, code, message) = match f {
                Failure::Module(e) => (e.kind(), exit_code(&e), e.to_string()),
                Failure::Check(m) => ("CheckFailed", 4, m),
            };
            let line = ErrorLine {
                error: kind,
                exit_code: code,
                message,
            };
            eprintln!(
                "{}",
                serde_json::to_string(&line).expect("error line serializes")
            );
            ExitCode::from(code)
        }
    }
}

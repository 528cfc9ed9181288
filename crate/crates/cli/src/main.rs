//! `moneykin`: run exchange simulations, fit income data, solve
//! Fokker-Planck problems and check small systems against the exact
//! master-equation oracle.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration or input error,
//! 3 invariant violation.

mod error;
mod fit;
mod fp;
mod oracle;
mod report;
mod simulate;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "moneykin", version, about = "Kinetic money-exchange simulator")]
struct Cli {
    /// Suppress progress and summary output on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation config and write its outputs to a directory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the replica count in the config.
        #[arg(long)]
        replicas: Option<u32>,
    },
    /// Two-class decomposition of an income table (CSV with `income` and
    /// optional `weight` columns).
    Fit {
        data: PathBuf,
        /// JSON file with decomposition options.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Choose the crossover by KS scan instead of the log-ratio rule.
        #[arg(long)]
        ks_scan: bool,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a Fokker-Planck problem and write the `m,P` profile.
    FpSolve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Implicit time step; with `--steps`, returns the profile at
        /// `dt * steps` instead of the stationary one.
        #[arg(long, requires = "steps")]
        dt: Option<f64>,
        #[arg(long, requires = "dt")]
        steps: Option<usize>,
    },
    /// Exact stationary marginal of a small simulation config.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        /// Write the marginal CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also run the config and compare its long-run marginal.
        #[arg(long)]
        verify: bool,
        #[arg(long, default_value_t = 0.01)]
        tolerance: f64,
        /// Overrides the seed used by `--verify`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Markdown report of a completed run directory.
    Report {
        run_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn threads() -> CliResult<Option<usize>> {
    match std::env::var("MONEYKIN_THREADS") {
        Err(_) => Ok(None),
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::config(format!("MONEYKIN_THREADS must be a positive integer, got {v:?}"))),
        },
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, bytes).map_err(|e| CliError::io(p, e)),
        None => io::stdout().write_all(bytes).map_err(|e| CliError::Other(e.to_string())),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let quiet = cli.quiet;
    match cli.command {
        Command::Simulate {
            config,
            out,
            seed,
            replicas,
        } => {
            simulate::cmd_simulate(&simulate::SimulateArgs {
                config: &config,
                out: &out,
                seed,
                replicas,
                threads: threads()?,
                quiet,
            })?;
        }
        Command::Fit {
            data,
            config,
            ks_scan,
            out,
        } => {
            let f = fit::cmd_fit(&data, config.as_deref(), ks_scan)?;
            let mut bytes = serde_json::to_vec_pretty(&f).map_err(|e| CliError::Other(e.to_string()))?;
            bytes.push(b'\n');
            emit(out.as_deref(), &bytes)?;
        }
        Command::FpSolve {
            config,
            out,
            dt,
            steps,
        } => {
            let (problem, p) = fp::cmd_fp_solve(&config, dt.zip(steps))?;
            let mut buf = Vec::new();
            fp::write_profile(&mut buf, &problem, &p)?;
            emit(out.as_deref(), &buf)?;
        }
        Command::Oracle {
            config,
            out,
            verify,
            tolerance,
            seed,
        } => {
            let verify = if verify {
                let s = match seed {
                    Some(s) => s,
                    None => simulate::load_config(&config)?.seed,
                };
                Some((s, tolerance))
            } else {
                None
            };
            let o = oracle::cmd_oracle(&config, verify)?;
            let mut buf = Vec::new();
            oracle::write_marginal(&mut buf, &o.marginal)?;
            let summary = oracle::summary(&o).join("\n");
            match &out {
                Some(p) => {
                    fs::write(p, &buf).map_err(|e| CliError::io(p, e))?;
                    println!("{summary}");
                }
                None => {
                    if !quiet {
                        eprintln!("{summary}");
                    }
                    emit(None, &buf)?;
                }
            }
            if !o.balance_ok() {
                return Err(CliError::Invariant(format!(
                    "detailed balance residual {:.3e} for a time-reversible kernel",
                    o.balance.max_residual
                )));
            }
            if let Some(v) = o.verification.filter(|v| !v.passed) {
                return Err(CliError::Invariant(format!(
                    "simulated marginal differs from the oracle by L1 {:.4e} (tolerance {})",
                    v.l1, v.tolerance
                )));
            }
        }
        Command::Report { run_dir, out } => {
            let text = report::cmd_report(&run_dir)?;
            emit(out.as_deref(), text.as_bytes())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("moneykin: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

//! `bbring`: simulate a black box ring encrypting M2(F_q), recover its
//! structure, and validate the probability estimates the algorithms use.
//!
//! Exit codes: 0 pass, 1 verification failure, 2 recovery failure,
//! 3 usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use bbring::bench::run_bench;
use bbring::report::{run_and_report, Mode, RecoveryReport, RunInfo};
use bbring::stats::{run_stat_with_counters, StatClaim, StatsError};
use bbring::{FieldParams, RecoveryConfig};

const EXIT_PASS: u8 = 0;
const EXIT_VERIFICATION_FAILURE: u8 = 1;
const EXIT_RECOVERY_FAILURE: u8 = 2;
const EXIT_USAGE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "bbring",
    about = "Black box rings of 2x2 matrices: oracle simulation and structure recovery"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct FieldArgs {
    /// Field order q = p^m; odd, at most 2^20.
    #[arg(long)]
    q: u64,
    /// Characteristic, for an explicit extension-field construction.
    #[arg(long, requires = "m", requires = "irr")]
    p: Option<u64>,
    /// Extension degree.
    #[arg(long)]
    m: Option<u32>,
    /// Modulus coefficients, constant first including the leading 1:
    /// "1,0,1" is x^2 + 1.
    #[arg(long, value_delimiter = ',')]
    irr: Option<Vec<u64>>,
}

impl FieldArgs {
    fn resolve(&self) -> Result<FieldParams, String> {
        let params = match (self.p, self.m, &self.irr) {
            (Some(p), Some(m), Some(irr)) => {
                FieldParams::extension(p, m, irr).map_err(|e| e.to_string())?
            }
            (Some(p), Some(1) | None, None) => {
                FieldParams::prime(p).map_err(|e| e.to_string())?
            }
            (None, None, None) => FieldParams::from_order(self.q).map_err(|e| e.to_string())?,
            _ => return Err("--p, --m and --irr must be given together".to_string()),
        };
        if params.q() != self.q {
            return Err(format!(
                "--q {} does not match p^m = {}",
                self.q,
                params.q()
            ));
        }
        Ok(params)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Recover the matrix-ring structure behind a fresh oracle session,
    /// run the invariant suite, and write the report.
    Recover {
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long)]
        seed: u64,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Omit wall-clock fields, making the report byte-reproducible.
        #[arg(long)]
        no_timings: bool,
    },
    /// Recover plus the full invariant suite; the exit status is the verdict.
    Verify {
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_timings: bool,
    },
    /// Sampling experiment for one probability claim.
    Stats {
        /// invertibility | scalar_distribution | coset_half | sylow_rate
        #[arg(long)]
        claim: String,
        #[command(flatten)]
        field: FieldArgs,
        /// Sample count; defaults to the claim's calibrated size.
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long)]
        seed: u64,
    },
    /// Recovery query-count scaling across field orders.
    Bench {
        /// Comma-separated field orders.
        #[arg(long = "q-list", value_delimiter = ',')]
        q_list: Vec<u64>,
        /// Comma-separated seeds; one recovery per (q, seed).
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_PASS,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    ExitCode::from(run(cli))
}

fn usage_error(message: &str) -> u8 {
    eprintln!("error: {message}");
    EXIT_USAGE
}

fn run(cli: Cli) -> u8 {
    match cli.command {
        Command::Recover { field, seed, out, no_timings } => {
            recover_command(field, seed, out, no_timings, Mode::Recover)
        }
        Command::Verify { field, seed, out, no_timings } => {
            recover_command(field, seed, out, no_timings, Mode::Verify)
        }
        Command::Stats { claim, field, samples, seed } => {
            stats_command(claim, field, samples, seed)
        }
        Command::Bench { q_list, seeds, out } => bench_command(q_list, seeds, out),
    }
}

fn recover_command(
    field: FieldArgs,
    seed: u64,
    out: Option<PathBuf>,
    no_timings: bool,
    mode: Mode,
) -> u8 {
    let params = match field.resolve() {
        Ok(p) => p,
        Err(e) => return usage_error(&e),
    };
    let cfg = RecoveryConfig { seed, ..RecoveryConfig::default() };
    let report = run_and_report(&params, seed, &cfg, mode);
    if emit(&report.to_text(!no_timings), out.as_deref()).is_err() {
        return usage_error("cannot write report file");
    }
    if report.failing_step.is_some() {
        EXIT_RECOVERY_FAILURE
    } else if !report.success {
        EXIT_VERIFICATION_FAILURE
    } else {
        EXIT_PASS
    }
}

fn stats_command(
    claim: String,
    field: FieldArgs,
    samples: Option<u64>,
    seed: u64,
) -> u8 {
    let params = match field.resolve() {
        Ok(p) => p,
        Err(e) => return usage_error(&e),
    };
    let claim: StatClaim = match claim.parse::<StatClaim>() {
        Ok(c) => c,
        Err(e) => return usage_error(&e.to_string()),
    };
    let samples = samples.unwrap_or_else(|| claim.default_samples());
    if samples == 0 {
        return usage_error("--samples must be positive");
    }
    match run_stat_with_counters(&params, seed, claim, samples) {
        Ok((stat, counters)) => {
            let pass = stat.pass;
            let report = RecoveryReport {
                run: RunInfo {
                    q: params.q(),
                    p: params.p(),
                    m: params.m(),
                    seed,
                    mode: Mode::Stats,
                },
                success: pass,
                failing_step: None,
                queries: counters,
                steps: Vec::new(),
                checks: Vec::new(),
                stats: Some(stat),
            };
            print!("{}", report.to_text(true));
            if pass {
                EXIT_PASS
            } else {
                EXIT_VERIFICATION_FAILURE
            }
        }
        Err(e @ (StatsError::UnknownClaim(_) | StatsError::OrderTooLargeForClaim { .. })) => {
            usage_error(&e.to_string())
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RECOVERY_FAILURE
        }
    }
}

fn bench_command(q_list: Vec<u64>, seeds: Vec<u64>, out: Option<PathBuf>) -> u8 {
    if q_list.is_empty() || seeds.is_empty() {
        return usage_error("--q-list and --seeds must be non-empty");
    }
    let table = match run_bench(&q_list, &seeds, &RecoveryConfig::default()) {
        Ok(t) => t,
        Err(e) => return usage_error(&e.to_string()),
    };
    if emit(&table.to_text(), out.as_deref()).is_err() {
        return usage_error("cannot write report file");
    }
    if table.any_failures() {
        EXIT_RECOVERY_FAILURE
    } else if !table.all_pass() {
        EXIT_VERIFICATION_FAILURE
    } else {
        EXIT_PASS
    }
}

fn emit(text: &str, out: Option<&std::path::Path>) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

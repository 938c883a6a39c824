use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use waterbands::io::run::{
    run_bands, run_gaps, run_predict, run_quasimode, run_validate, with_threads, CheckStatus,
};
use waterbands::io::{parse_config, Experiment};
use waterbands::{Error, Result};

/// Bloch band structure of linear water waves over a periodic bottom.
#[derive(Parser)]
#[command(name = "waterbands", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute band functions and write CSV tables and SVG plots.
    Bands(Args),
    /// Measure gaps and compare them with the closed-form predictions.
    Gaps(Args),
    /// Write the closed-form gap predictions only.
    Predict(Args),
    /// Build quasimodes and certify the eigenvalues they locate.
    Quasimode(Args),
    /// Run the internal consistency checks.
    Validate(Args),
}

#[derive(clap::Args)]
struct Args {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for all cores; overrides the configuration.
    #[arg(long)]
    threads: Option<usize>,
}

enum Outcome {
    Ok,
    Failed,
}

fn load(args: &Args) -> Result<(Experiment, PathBuf, usize)> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let exp = parse_config(&text)?;
    let out = args.out.clone().unwrap_or_else(|| exp.config.outputs.clone());
    let threads = args.threads.unwrap_or(exp.config.thread_count);
    Ok((exp, out, threads))
}

fn wrote(path: &Path) {
    println!("wrote {}", path.display());
}

fn execute(command: &Command) -> Result<Outcome> {
    let args = match command {
        Command::Bands(a) | Command::Gaps(a) | Command::Predict(a) | Command::Quasimode(a) | Command::Validate(a) => a,
    };
    let (exp, out, threads) = load(args)?;
    with_threads(threads, || -> Result<Outcome> {
        match command {
            Command::Bands(_) => {
                run_bands(&exp, &out)?.iter().for_each(|p| wrote(p));
                Ok(Outcome::Ok)
            }
            Command::Gaps(_) => {
                let (report, path) = run_gaps(&exp, &out)?;
                for e in &report.entries {
                    let verdict = match e.pass {
                        Some(true) => "pass",
                        Some(false) => "FAIL",
                        None => "no prediction",
                    };
                    println!(
                        "p={} {:?} eps={} width={:.6e} deviation={} {verdict}",
                        e.p,
                        e.location,
                        e.epsilon,
                        e.measured.width,
                        e.deviation.map_or("-".into(), |d| format!("{d:.3e}")),
                    );
                }
                wrote(&path);
                Ok(if report.all_passed() { Outcome::Ok } else { Outcome::Failed })
            }
            Command::Predict(_) => {
                wrote(&run_predict(&exp, &out)?.1);
                Ok(Outcome::Ok)
            }
            Command::Quasimode(_) => {
                let (report, path) = run_quasimode(&exp, &out)?;
                for e in &report.entries {
                    match &e.certificate {
                        Some(c) => println!(
                            "eps={} {:?}: lambda={:.12} bound={:.3e} informative={}",
                            e.epsilon, e.branch, c.matched_lambda, c.error_bound, c.informative
                        ),
                        None => println!(
                            "eps={} {:?}: not certified: {}",
                            e.epsilon,
                            e.branch,
                            e.failure.as_deref().unwrap_or("")
                        ),
                    }
                }
                wrote(&path);
                Ok(Outcome::Ok)
            }
            Command::Validate(_) => {
                let (report, path) = run_validate(&exp, &out)?;
                for c in &report.checks {
                    let status = match c.status {
                        CheckStatus::Pass => "pass",
                        CheckStatus::Fail => "FAIL",
                        CheckStatus::Skipped => "skipped",
                    };
                    println!(
                        "{:<22} {status:<8} {} ({})",
                        c.name,
                        c.measured.map_or("-".into(), |m| format!("{m:.3e}")),
                        c.detail
                    );
                }
                wrote(&path);
                Ok(if report.passed { Outcome::Ok } else { Outcome::Failed })
            }
        }
    })?
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

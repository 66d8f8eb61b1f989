use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use temrl_cli::config::parse_seeds;
use temrl_cli::runner::{emit_results, prepare_dir, run_config, write_file, Format};
use temrl_cli::sweep::{sweep, sweep_csv};
use temrl_cli::{verify_suite, ExperimentConfig, HarnessError, Mode, Result, EXIT_VERIFICATION_FAILURE};

#[derive(Debug, Parser)]
#[command(name = "temrl", version, about = "Tsallis-entropy Munchausen RL experiments on tabular MDPs")]
struct Cli {
    /// Experiment file (`section.key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed list overriding `experiment.seeds`, e.g. `3`, `0..5` or `1,2`.
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Output directory overriding `experiment.output`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact recursions for every configured variant.
    Solve {
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Sampled learner for every configured variant.
    Train {
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Multi-variant comparison in the configured mode.
    Compare {
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Identity checks; exit status 1 on any failure.
    Verify,
    /// Grid over τ and α.
    Sweep,
}

/// Reads the config; `mode` overrides `experiment.mode` before validation.
fn load(cli: &Cli, mode: Option<Mode>) -> Result<ExperimentConfig> {
    let text = match &cli.config {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| HarnessError::config("--config", format!("{}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut cfg = ExperimentConfig::parse_with_mode(&text, mode)?;
    if let Some(seeds) = &cli.seed {
        cfg = cfg.with_seeds(
            parse_seeds(seeds).map_err(|_| HarnessError::config("--seed", format!("cannot parse '{seeds}'")))?,
        )?;
    }
    if let Some(out) = &cli.out {
        cfg = cfg.with_output(out.clone());
    }
    Ok(cfg)
}

fn run_and_emit(cfg: ExperimentConfig, format: Format) -> Result<()> {
    let bundle = run_config(&cfg)?;
    emit_results(&bundle, format, &cfg.output)?;
    for row in bundle.summary() {
        println!(
            "{:<20} n={:<3} final return {:.6} ± {:.6}",
            row.variant.name(),
            row.n,
            row.final_mean_return,
            row.final_std_return
        );
    }
    println!("wrote {}", cfg.output.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Solve { format } => run_and_emit(load(cli, Some(Mode::ExactDp))?, *format)?,
        Command::Train { format } => run_and_emit(load(cli, Some(Mode::Sampled))?, *format)?,
        Command::Compare { format } => run_and_emit(load(cli, None)?, *format)?,
        Command::Sweep => {
            let cfg = load(cli, None)?;
            prepare_dir(&cfg.output)?;
            let path = cfg.output.join("sweep.csv");
            write_file(&path, &sweep_csv(&sweep(&cfg)?))?;
            println!("wrote {}", path.display());
        }
        Command::Verify => {
            let report = verify_suite()?;
            if let Some(out) = &cli.out {
                prepare_dir(out)?;
                write_file(&out.join("verify.json"), &report.to_json())?;
            } else {
                println!("{}", report.to_json());
            }
            let checks = report.entries.iter().filter(|e| !e.informational).count();
            let failures: Vec<_> = report.failures().collect();
            for f in &failures {
                eprintln!("FAIL {} / {}: {:e} > {:e}", f.group, f.name, f.value, f.tolerance);
            }
            eprintln!("{} checks, {} failed", checks, failures.len());
            if !failures.is_empty() {
                return Ok(ExitCode::from(EXIT_VERIFICATION_FAILURE));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

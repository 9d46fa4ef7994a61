//! `fcount`: run trajectory experiments, parameter sweeps, theory curves and
//! the oracle equivalence check.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use fcount::config::{parse_config, parse_sweep};
use fcount::experiment::{output_dir, run_experiment, run_sweep, run_theory, write_outputs};
use fcount::oracle_check::run_oracle_check;

#[derive(Parser, Debug)]
#[command(name = "fcount", version, about = "Monitored free-fermion trajectory experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment (or sweep) configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the trajectory pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress progress lines.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate an ensemble and write observables, theory overlays and fits.
    Run,
    /// Run a template experiment over a parameter grid.
    Sweep,
    /// Write theory curves only.
    Theory,
    /// Compare the Gaussian modules with the Fock-space oracle.
    OracleCheck {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 50)]
        steps: usize,
    },
}

fn config_path(cli: &Cli) -> Result<&PathBuf> {
    cli.config.as_ref().context("--config PATH is required")
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Run => {
            let mut cfg = parse_config(config_path(&cli)?)?;
            if let Some(s) = cli.seed {
                cfg.run.seed = s;
            }
            let dir = output_dir(cli.out.clone(), &cfg);
            let outcome = run_experiment(&cfg, !cli.quiet)?;
            write_outputs(&outcome, &dir)?;
            if !outcome.stats.aborted.is_empty() {
                eprintln!("{} trajectories aborted", outcome.stats.aborted.len());
            }
            eprintln!("wrote {}", dir.display());
        }
        Command::Sweep => {
            let mut sweep = parse_sweep(config_path(&cli)?)?;
            if let Some(s) = cli.seed {
                sweep.base.run.seed = s;
            }
            let dir = output_dir(cli.out.clone(), &sweep.base);
            let summary = run_sweep(&sweep, &dir, !cli.quiet)?;
            for (name, k, se) in &summary.exponents {
                println!("{name}: exponent {k:.4} +- {se:.4}");
            }
        }
        Command::Theory => {
            let cfg = parse_config(config_path(&cli)?)?;
            let dir = output_dir(cli.out.clone(), &cfg);
            run_theory(&cfg, &dir)?;
            eprintln!("wrote {}", dir.display());
        }
        Command::OracleCheck { instances, steps } => {
            let results = run_oracle_check(*instances, *steps, cli.seed.unwrap_or(0));
            for r in &results {
                println!(
                    "instance {:2} L={} eta={} general={}: max dev {:.2e}, deterministic {:.2e}, jumps {}+{} {}",
                    r.index,
                    r.sites,
                    r.eta,
                    r.general_channels,
                    r.max_deviation,
                    r.max_deterministic_deviation,
                    r.sampled_jumps,
                    r.forced_jumps,
                    if r.passed { "ok" } else { "FAILED" }
                );
                if let Some(e) = &r.error {
                    println!("  error: {e}");
                }
            }
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("oracle_check.json"), serde_json::to_string_pretty(&results)? + "\n")?;
            }
            if results.iter().any(|r| !r.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

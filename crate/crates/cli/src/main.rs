use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use rigid_refine::gradcheck::{jacobian_kabsch, run_gradcheck, ABS_FLOOR, REL_TOLERANCE, SIGNIFICANT_MAGNITUDE};
use rigid_refine::Error;
use rigid_refine_cli::{compare_methods, render_comparison, render_csv, run_experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "rigid-refine", version, about = "Rigid registration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the trials described by a config file and write a CSV table.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_path`; standard output when neither is set.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        /// Overrides `problem.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Paired comparison of configs against the first one.
    Compare {
        #[arg(long = "config", required = true, num_args = 1)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the analytic refinement-step Jacobian against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        n_points: usize,
    },
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_file(path).with_context(|| format!("loading {}", path.display()))
}

fn emit(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => std::io::stdout().write_all(text.as_bytes()).context("writing to stdout"),
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            out,
            trials,
            seed,
        } => {
            let mut cfg = load(&config)?;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = seed {
                cfg.problem.seed = s;
            }
            cfg.validate()?;
            let records = run_experiment(&cfg);
            emit(&render_csv(&records), out.as_deref().or(cfg.output_path.as_deref()))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { configs, out } => {
            let configs = configs.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
            let comparison = compare_methods(&configs)?;
            emit(&render_comparison(&comparison), out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck { seed, n_points } => {
            let outcome = run_gradcheck(seed, n_points)?;
            let cmp = outcome.comparison;
            println!("refine step: max relative error {:.3e}", cmp.max_rel_error);
            println!("refine step: max absolute error {:.3e}", cmp.max_abs_error);
            println!(
                "refine step: max relative error on entries >= {SIGNIFICANT_MAGNITUDE:e} {:.3e}",
                cmp.max_rel_error_significant
            );
            println!("refine step: KKT condition {:.3e}", outcome.condition);
            let (c, _) = rigid_refine::gradcheck::gradcheck_problem(seed, n_points)?;
            match jacobian_kabsch(&rigid_refine::center(&c)) {
                Ok(j) => println!("kabsch: finite-difference Jacobian, max entry {:.3e}", j.matrix().amax()),
                Err(Error::IllConditioned { gap }) => println!("kabsch: ill-conditioned (singular-value gap {gap:.3e})"),
                Err(e) => return Err(e.into()),
            }
            let pass = cmp.passes(REL_TOLERANCE);
            println!(
                "{} (relative tolerance {REL_TOLERANCE:e}, absolute floor {ABS_FLOOR:e})",
                if pass { "PASS" } else { "FAIL" }
            );
            Ok(if pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

//! Command-line front end: run scenarios, solve dispatch, manage built-in
//! scenarios, and re-check saved trajectories.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use gridmarket::analysis::DESCENT_SLACK;
use gridmarket::cli::{
    self, builtin_names, render_dispatch, render_summary, resolve_scenario, RunSummary,
};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "gridmarket",
    version,
    about = "Electricity market dynamics on power networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one or more scenarios and write trajectory + summary files.
    Run {
        /// Built-in scenario names or TOML file paths.
        #[arg(required = true)]
        scenarios: Vec<String>,
        /// Output directory (per-scenario subdirectories when several run).
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the integration step.
        #[arg(long)]
        dt: Option<f64>,
        /// Override the frequency-feedback gain.
        #[arg(long)]
        sigma: Option<f64>,
        /// Exit nonzero if any run fails its built-in checks.
        #[arg(long)]
        strict: bool,
    },
    /// Solve the dispatch problem for a scenario's initial load.
    Dispatch { scenario: String },
    /// List or dump the built-in scenarios.
    Scenarios {
        #[command(subcommand)]
        action: ScenarioAction,
    },
    /// Re-run the invariant checks on a saved trajectory file.
    Check {
        trajectory: PathBuf,
        /// Per-sample slack for the descent check.
        #[arg(long, default_value_t = DESCENT_SLACK)]
        slack: f64,
        /// Exit nonzero on failure.
        #[arg(long)]
        strict: bool,
    },
}

#[derive(Subcommand)]
enum ScenarioAction {
    /// Print the names of the built-in scenarios.
    List,
    /// Write a built-in scenario as TOML (to stdout or --out).
    Dump {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenarios,
            out,
            dt,
            sigma,
            strict,
        } => run_command(scenarios, out, dt, sigma, strict),
        Command::Dispatch { scenario } => {
            let scenario = resolve_scenario(&scenario)?;
            let (sol, costs) = cli::dispatch(&scenario)?;
            print!("{}", render_dispatch(&sol, &costs));
            Ok(())
        }
        Command::Scenarios { action } => match action {
            ScenarioAction::List => {
                for name in builtin_names() {
                    println!("{name}");
                }
                Ok(())
            }
            ScenarioAction::Dump { name, out } => {
                let Some(scenario) = cli::builtin(&name) else {
                    bail!(
                        "unknown scenario '{name}'; available: {}",
                        builtin_names().join(", ")
                    );
                };
                let text = scenario.to_toml()?;
                match out {
                    Some(path) => std::fs::write(&path, text)
                        .with_context(|| format!("writing {}", path.display()))?,
                    None => print!("{text}"),
                }
                Ok(())
            }
        },
        Command::Check {
            trajectory,
            slack,
            strict,
        } => {
            let report = cli::check_trajectory(&trajectory, slack)?;
            println!("rows: {}", report.rows);
            println!("min bid: {:.6e}", report.min_bid);
            println!("min setpoint (MW): {:.6e}", report.min_p_g_mw);
            println!("final |omega|: {:.6e}", report.final_omega_inf);
            println!(
                "lyapunov descends: {} (max increment {:.3e})",
                report.lyapunov_descends, report.max_lyapunov_increment
            );
            println!("overall: {}", if report.pass { "PASS" } else { "FAIL" });
            if strict && !report.pass {
                std::process::exit(1);
            }
            Ok(())
        }
    }
}

fn run_command(
    names: Vec<String>,
    out: PathBuf,
    dt: Option<f64>,
    sigma: Option<f64>,
    strict: bool,
) -> Result<()> {
    let mut jobs = Vec::new();
    for name in &names {
        let mut scenario =
            resolve_scenario(name).with_context(|| format!("loading scenario '{name}'"))?;
        if let Some(dt) = dt {
            scenario.run.dt = dt;
        }
        if let Some(sigma) = sigma {
            scenario.gains.sigma = sigma;
        }
        let dir = if names.len() == 1 {
            out.clone()
        } else {
            out.join(&scenario.name)
        };
        jobs.push((scenario, dir));
    }

    let results = execute_jobs(jobs)?;
    let mut all_pass = true;
    for summary in &results {
        print!("{}", render_summary(summary));
        let pass = summary.min_bid >= 0.0
            && summary.min_p_g >= 0.0
            && summary.lyapunov.descends
            && summary.segments.iter().all(|s| s.efficiency.pass);
        if !pass {
            all_pass = false;
        }
        println!(
            "run checks: {}",
            if pass {
                "PASS"
            } else {
                "FAIL (see summary above)"
            }
        );
    }
    if strict && !all_pass {
        std::process::exit(1);
    }
    Ok(())
}

/// Independent scenarios execute concurrently when the thread pool is
/// available; output directories are isolated per run.
#[cfg(feature = "parallel")]
fn execute_jobs(jobs: Vec<(gridmarket::Scenario, PathBuf)>) -> Result<Vec<RunSummary>> {
    use rayon::prelude::*;
    jobs.into_par_iter()
        .map(|(scenario, dir)| {
            let compiled = scenario.compile()?;
            let (summary, _) = cli::run(&compiled, &dir)?;
            Ok(summary)
        })
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn execute_jobs(jobs: Vec<(gridmarket::Scenario, PathBuf)>) -> Result<Vec<RunSummary>> {
    jobs.into_iter()
        .map(|(scenario, dir)| {
            let compiled = scenario.compile()?;
            let (summary, _) = cli::run(&compiled, &dir)?;
            Ok(summary)
        })
        .collect()
}

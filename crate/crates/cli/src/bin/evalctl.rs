//! Experiment driver: plan the run matrix, execute it, re-run failures, and
//! dump team stores.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use botboard_eval::{plan_runs, EvalError, ExperimentConfig, Orchestrator};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "evalctl", version, about = "Two-phase evaluation orchestrator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Print the run matrix without executing anything.
    Plan {
        #[command(flatten)]
        config: ConfigArg,
        /// Print every planned run as JSON instead of counts.
        #[arg(long)]
        json: bool,
    },
    /// Execute every planned run once.
    Run {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Re-run infrastructure failures until the matrix is complete.
    Remediate {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Write each provisioned team's store to <workspace>/exports/teams/.
    Export {
        #[command(flatten)]
        config: ConfigArg,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("evalctl: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load(arg: &ConfigArg) -> Result<ExperimentConfig, EvalError> {
    Ok(ExperimentConfig::load(&arg.config)?)
}

fn run(command: Command) -> Result<ExitCode, EvalError> {
    match command {
        Command::Plan { config, json } => {
            let config = load(&config)?;
            let plan = plan_runs(&config)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&plan).expect("plan serializes"));
                return Ok(ExitCode::SUCCESS);
            }
            let mut cells: BTreeMap<(String, String), usize> = BTreeMap::new();
            for r in &plan {
                *cells
                    .entry((r.model_label.clone(), format!("{}-{}", r.variant, r.phase)))
                    .or_default() += 1;
            }
            for ((model, config), n) in &cells {
                println!("{model:<24} {config:<26} {n:>6}");
            }
            println!("total {} runs in {} configurations", plan.len(), cells.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config } => {
            let orch = Orchestrator::from_config(load(&config)?)?;
            let s = orch.run()?;
            println!(
                "executed {}/{} runs, {} infrastructure failures",
                s.executed, s.planned, s.infra_failures
            );
            let mut healthy = s.pipeline_errors.is_empty();
            for check in &s.phase_checks {
                let verdict = if check.holds() { "ok" } else { "VIOLATED" };
                println!(
                    "phase check {}: team {} start-empty={} first-read={:?} handoff-identical={} {verdict}",
                    check.pipeline,
                    check.team_id,
                    check.empty_start_empty,
                    check.first_read_count,
                    check.handoff_identical
                );
                healthy &= check.holds();
            }
            for e in &s.pipeline_errors {
                eprintln!("pipeline error: {e}");
            }
            if s.infra_failures > 0 {
                println!(
                    "run `evalctl remediate --config {}` to re-run failures",
                    config.config.display()
                );
            }
            Ok(if healthy { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Remediate { config } => {
            let orch = Orchestrator::from_config(load(&config)?)?;
            let s = orch.remediate()?;
            for a in &s.applied {
                let outcome: Vec<String> = a
                    .reruns
                    .iter()
                    .map(|(phase, attempt, status)| format!("{phase}#{attempt}={status:?}"))
                    .collect();
                println!(
                    "pass {}: {} team={} {}",
                    a.pass,
                    a.action,
                    a.team_id.as_deref().unwrap_or("-"),
                    outcome.join(" ")
                );
            }
            let c = &s.completeness;
            println!(
                "{}/{} planned runs ok, {} failed, {} missing",
                c.ok,
                c.planned,
                c.failed.len(),
                c.missing.len()
            );
            Ok(if c.is_complete() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Export { config } => {
            let orch = Orchestrator::from_config(load(&config)?)?;
            for path in orch.export_all()? {
                println!("{}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

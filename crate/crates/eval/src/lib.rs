//! Plans and executes the two-phase evaluation matrix: every tool variant
//! runs once against an empty team store and again against the store its
//! first pass accumulated. Runs are driven through an [`AgentRunner`],
//! logged as JSON, and infrastructure failures are re-run by
//! [`remediate::plan_remediation`].

pub mod backend;
pub mod clock;
pub mod config;
pub mod execute;
pub mod orchestrator;
pub mod plan;
pub mod problem;
pub mod prompts;
pub mod remediate;
pub mod runner;
pub mod scripted;
pub mod session;

pub use backend::{BackendError, BackendHandle};
pub use config::{BackendConfig, ConfigError, ExperimentConfig, RunnerConfig};
pub use execute::execute_run;
pub use orchestrator::{EvalError, Orchestrator, PhaseCheck, RemediationSummary, RunSummary};
pub use plan::{plan_runs, PlannedRun};
pub use remediate::{plan_remediation, RemediationAction};
pub use runner::{AgentEnv, AgentRunner, ExternalCommandRunner, RunnerError, RunnerReport};
pub use scripted::{Script, ScriptedRunner};

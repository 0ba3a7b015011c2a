use std::path::{Path, PathBuf};
use std::time::Duration;

use botboard_core::model::{RunRecord, RunStatus, ToolAction, ToolEvent};
use botboard_core::runlog::{completion_marker, RunLog, TranscriptEvent};
use botboard_core::wire::TeamCredentials;
use chrono::{DateTime, Utc};

use crate::clock::Clock;
use crate::plan::PlannedRun;
use crate::problem::{Problem, PROBLEM_FILE};
use crate::prompts;
use crate::runner::{mode_for, AgentEnv, AgentRunner, RunnerReport, ToolAccess};

/// Everything a run needs besides the matrix cell itself.
pub struct RunContext<'a> {
    pub workspace_root: &'a Path,
    pub backend_url: &'a str,
    pub timeout: Duration,
    pub mcp_command: Option<&'a Path>,
    pub clock: &'a dyn Clock,
    pub runner: &'a dyn AgentRunner,
}

pub fn scratch_dir(workspace_root: &Path, run: &PlannedRun, attempt: u32) -> PathBuf {
    workspace_root
        .join("runs")
        .join(&run.model_label)
        .join(format!("{}-{}", run.variant, run.phase))
        .join(format!("{}-{}-a{}", run.problem_id, run.repetition, attempt))
}

/// Derives tool events from the transcript's tool calls.
pub fn tool_events(transcript: &[TranscriptEvent], completion_at: Option<DateTime<Utc>>) -> Vec<ToolEvent> {
    transcript
        .iter()
        .filter_map(|e| match e {
            TranscriptEvent::ToolCall { at, name, .. } => {
                ToolAction::for_tool_name(name).map(|(tool, action)| ToolEvent {
                    timestamp: *at,
                    tool,
                    action,
                    after_completion: completion_at.is_some_and(|c| *at > c),
                })
            }
            _ => None,
        })
        .collect()
}

/// Runs one matrix cell. Never fails: anything that goes wrong on the agent
/// side is recorded as an infrastructure failure for remediation.
pub fn execute_run(
    ctx: &RunContext<'_>,
    run: &PlannedRun,
    attempt: u32,
    problem: &Problem,
    instructions: Option<String>,
    team: Option<&TeamCredentials>,
) -> RunLog {
    let workdir = scratch_dir(ctx.workspace_root, run, attempt);
    let prompt = prompts::prompt_record(problem, run.variant, instructions);
    let tools = match (mode_for(run.variant), team) {
        (Some(mode), Some(team)) => Some(ToolAccess {
            mode,
            backend_url: ctx.backend_url.to_string(),
            team_key: team.key.clone(),
            command: ctx.mcp_command.map(Path::to_path_buf),
        }),
        _ => None,
    };

    let started = ctx.clock.monotonic();
    let mut failure = None;
    let mut report = RunnerReport::default();
    let mut transcript = Vec::new();
    match prepare(&workdir, problem) {
        Err(e) => failure = Some(format!("cannot prepare {}: {e}", workdir.display())),
        Ok(()) => {
            let mut env = AgentEnv::new(run, attempt, problem, &workdir, &prompt, ctx.timeout, tools, ctx.clock);
            match ctx.runner.run(&mut env) {
                Ok(r) => report = r,
                Err(e) => failure = Some(e.to_string()),
            }
            transcript = env.into_transcript();
        }
    }
    let (tests_passed, tests_total) = problem.run_tests(&workdir);
    transcript.push(TranscriptEvent::TestRun {
        at: ctx.clock.now(),
        passed: tests_passed,
        total: tests_total,
    });
    if let Some(reason) = &failure {
        transcript.push(TranscriptEvent::Failure {
            at: ctx.clock.now(),
            reason: reason.clone(),
        });
    }
    let wall_time_s = ctx.clock.monotonic().saturating_sub(started).as_secs_f64();

    let completion_at = completion_marker(&transcript);
    let record = RunRecord {
        problem_id: run.problem_id.clone(),
        model_label: run.model_label.clone(),
        variant: run.variant,
        phase: run.phase,
        repetition: run.repetition,
        attempt,
        cost_usd: report.cost_usd,
        turns: report.turns,
        wall_time_s,
        tokens: report.tokens,
        tests_passed,
        tests_total,
        completed: tests_passed == tests_total,
        tool_events: tool_events(&transcript, completion_at),
        status: if failure.is_some() {
            RunStatus::InfraFailure
        } else {
            RunStatus::Ok
        },
    };
    RunLog {
        record,
        team_id: team.map(|t| t.team_id.to_string()),
        prompt,
        completion_at,
        transcript,
    }
}

fn prepare(workdir: &Path, problem: &Problem) -> std::io::Result<()> {
    if workdir.exists() {
        std::fs::remove_dir_all(workdir)?;
    }
    std::fs::create_dir_all(workdir)?;
    let json = serde_json::to_vec_pretty(problem).map_err(std::io::Error::other)?;
    std::fs::write(workdir.join(PROBLEM_FILE), json)
}

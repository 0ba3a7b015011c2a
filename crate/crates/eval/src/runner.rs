//! The agent-runner interface and the external-command adapter.
//!
//! A runner drives one agent through one problem inside [`AgentEnv`], which
//! owns the transcript. Tool calls, file edits and test runs made through the
//! environment are recorded with timestamps from the orchestrator's clock.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use botboard_core::model::{TokenCounts, Variant};
use botboard_core::runlog::{PromptRecord, TranscriptEvent};
use botboard_mcp::Mode;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::clock::Clock;
use crate::plan::PlannedRun;
use crate::problem::{self, Problem, Solution, SOLUTION_FILE};
use crate::session::{ToolReply, ToolSession};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunnerError {
    #[error("agent crashed: {0}")]
    Crash(String),
    #[error("agent exceeded the {0:?} timeout")]
    Timeout(Duration),
    #[error("tool channel failed: {0}")]
    Tool(String),
}

/// Numbers only the agent side can observe.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunnerReport {
    pub cost_usd: f64,
    pub turns: u32,
    pub tokens: TokenCounts,
}

pub trait AgentRunner: Send + Sync {
    fn name(&self) -> &str;
    fn run(&self, env: &mut AgentEnv<'_>) -> Result<RunnerReport, RunnerError>;
}

/// Backend coordinates for a tool-enabled run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolAccess {
    pub mode: Mode,
    pub backend_url: String,
    pub team_key: String,
    /// `mcp-server` binary; `None` serves the protocol in-process.
    pub command: Option<PathBuf>,
}

pub fn mode_for(variant: Variant) -> Option<Mode> {
    match variant {
        Variant::Baseline => None,
        Variant::Journal => Some(Mode::Journal),
        Variant::Social => Some(Mode::Social),
        Variant::JournalSocial => Some(Mode::Combined),
    }
}

pub struct AgentEnv<'a> {
    pub run: &'a PlannedRun,
    pub attempt: u32,
    pub problem: &'a Problem,
    pub workdir: &'a Path,
    pub prompt: &'a PromptRecord,
    pub deadline: Instant,
    pub timeout: Duration,
    pub tools: Option<ToolAccess>,
    clock: &'a dyn Clock,
    session: Option<ToolSession>,
    transcript: Vec<TranscriptEvent>,
}

impl<'a> AgentEnv<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        run: &'a PlannedRun,
        attempt: u32,
        problem: &'a Problem,
        workdir: &'a Path,
        prompt: &'a PromptRecord,
        timeout: Duration,
        tools: Option<ToolAccess>,
        clock: &'a dyn Clock,
    ) -> Self {
        Self {
            run,
            attempt,
            problem,
            workdir,
            prompt,
            deadline: Instant::now() + timeout,
            timeout,
            tools,
            clock,
            session: None,
            transcript: Vec::new(),
        }
    }

    pub fn has_tool(&self, name: &str) -> bool {
        self.tools.as_ref().is_some_and(|t| t.mode.tool(name).is_some())
    }

    pub fn say(&mut self, text: impl Into<String>) {
        let at = self.clock.now();
        self.transcript.push(TranscriptEvent::Message { at, text: text.into() });
    }

    /// Calls a tool through the MCP session, starting it on first use.
    pub fn call_tool(&mut self, name: &str, arguments: Value) -> Result<ToolReply, RunnerError> {
        if self.session.is_none() {
            let access = self
                .tools
                .as_ref()
                .ok_or_else(|| RunnerError::Tool("this run has no tools".into()))?;
            let session = match &access.command {
                Some(cmd) => ToolSession::spawn(cmd, access.mode, &access.backend_url, &access.team_key)?,
                None => ToolSession::in_process(access.mode, &access.backend_url, &access.team_key)?,
            };
            self.session = Some(session);
        }
        let at = self.clock.now();
        let reply = self
            .session
            .as_mut()
            .expect("started above")
            .call_tool(name, &arguments)?;
        self.transcript.push(TranscriptEvent::ToolCall {
            at,
            name: name.to_string(),
            arguments,
            is_error: reply.is_error,
            result_count: reply.result_count(name),
            result_text: reply.text.clone(),
        });
        Ok(reply)
    }

    pub fn write_solution(&mut self, solution: &Solution) -> Result<(), RunnerError> {
        problem::write_solution(self.workdir, solution).map_err(|e| RunnerError::Crash(e.to_string()))?;
        let at = self.clock.now();
        self.transcript.push(TranscriptEvent::FileEdit {
            at,
            path: SOLUTION_FILE.to_string(),
        });
        Ok(())
    }

    pub fn run_tests(&mut self) -> (u32, u32) {
        let (passed, total) = self.problem.run_tests(self.workdir);
        let at = self.clock.now();
        self.transcript.push(TranscriptEvent::TestRun { at, passed, total });
        (passed, total)
    }

    /// Appends events an external agent reported itself.
    pub fn extend_transcript(&mut self, events: impl IntoIterator<Item = TranscriptEvent>) {
        self.transcript.extend(events);
    }

    pub fn now(&self) -> chrono::DateTime<chrono::Utc> {
        self.clock.now()
    }

    pub fn into_transcript(self) -> Vec<TranscriptEvent> {
        self.transcript
    }
}

/// Runs a program per problem in the problem's scratch directory.
///
/// The program sees `BOTBOARD_PROMPT_FILE` (task plus instructions),
/// `BOTBOARD_RESULT_FILE` (where it must write a [`ExternalReport`]),
/// `BOTBOARD_PROBLEM`, and for tool variants `BOTBOARD_URL`,
/// `BOTBOARD_TEAM_KEY` and `BOTBOARD_MCP_MODE`, which are what `mcp-server`
/// reads when launched without flags.
pub struct ExternalCommandRunner {
    pub command: Vec<String>,
    pub env: BTreeMap<String, String>,
}

/// What an external agent writes to `BOTBOARD_RESULT_FILE`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExternalReport {
    pub cost_usd: f64,
    pub turns: u32,
    pub tokens: ExternalTokens,
    #[serde(default)]
    pub transcript: Vec<TranscriptEvent>,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct ExternalTokens {
    #[serde(default)]
    pub input: u64,
    #[serde(default)]
    pub output: u64,
    #[serde(default)]
    pub cache_create: u64,
    #[serde(default)]
    pub cache_read: u64,
}

pub const PROMPT_FILE: &str = "prompt.md";
pub const RESULT_FILE: &str = "result.json";

impl AgentRunner for ExternalCommandRunner {
    fn name(&self) -> &str {
        "external-command"
    }

    fn run(&self, env: &mut AgentEnv<'_>) -> Result<RunnerReport, RunnerError> {
        let (program, args) = self
            .command
            .split_first()
            .ok_or_else(|| RunnerError::Crash("empty runner command".into()))?;
        let prompt_path = env.workdir.join(PROMPT_FILE);
        let result_path = env.workdir.join(RESULT_FILE);
        let mut prompt = env.prompt.task.clone();
        if let Some(instr) = &env.prompt.tool_instructions {
            prompt.push_str("\n\n");
            prompt.push_str(instr);
        }
        std::fs::write(&prompt_path, prompt).map_err(|e| RunnerError::Crash(e.to_string()))?;
        let log =
            std::fs::File::create(env.workdir.join("agent.log")).map_err(|e| RunnerError::Crash(e.to_string()))?;
        let log_err = log.try_clone().map_err(|e| RunnerError::Crash(e.to_string()))?;

        let mut cmd = Command::new(program);
        cmd.args(args)
            .current_dir(env.workdir)
            .stdin(Stdio::null())
            .stdout(log)
            .stderr(log_err)
            .envs(&self.env)
            .env("BOTBOARD_PROMPT_FILE", &prompt_path)
            .env("BOTBOARD_RESULT_FILE", &result_path)
            .env("BOTBOARD_PROBLEM", &env.problem.id);
        if let Some(t) = &env.tools {
            cmd.env("BOTBOARD_URL", &t.backend_url)
                .env("BOTBOARD_TEAM_KEY", &t.team_key)
                .env("BOTBOARD_MCP_MODE", t.mode.as_str());
        }
        let mut child = cmd
            .spawn()
            .map_err(|e| RunnerError::Crash(format!("cannot start {program}: {e}")))?;
        let remaining = env.deadline.saturating_duration_since(Instant::now());
        let status = match child
            .wait_timeout(remaining)
            .map_err(|e| RunnerError::Crash(e.to_string()))?
        {
            Some(status) => status,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(RunnerError::Timeout(env.timeout));
            }
        };
        if !status.success() {
            return Err(RunnerError::Crash(format!("agent exited with {status}")));
        }
        let raw = std::fs::read(&result_path).map_err(|e| RunnerError::Crash(format!("no result file: {e}")))?;
        let report: ExternalReport =
            serde_json::from_slice(&raw).map_err(|e| RunnerError::Crash(format!("bad result file: {e}")))?;
        env.extend_transcript(report.transcript);
        let t = report.tokens;
        Ok(RunnerReport {
            cost_usd: report.cost_usd,
            turns: report.turns,
            tokens: TokenCounts::new(t.input, t.output, t.cache_create, t.cache_read),
        })
    }
}

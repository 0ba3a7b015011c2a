//! Deterministic stand-in agent.
//!
//! Each problem may have a script at `<scripts_dir>/<problem>.json`. Without
//! an explicit `steps` list the agent follows a default policy: read the
//! problem, look for earlier knowledge about it if tools are available, make
//! the configured number of wrong attempts, write the passing solution, then
//! journal and post. Token counts are drawn from a ChaCha stream seeded by
//! the run's coordinates, so a fixed seed reproduces every record.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use botboard_core::model::{Phase, TokenCounts};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::runner::{AgentEnv, AgentRunner, RunnerError, RunnerReport};

/// USD per million tokens: input, output, cache write, cache read.
pub const PRICES_PER_MTOK: [f64; 4] = [3.0, 15.0, 3.75, 0.30];

pub const AGENT_NAME: &str = "scripted-agent";

/// Per-phase counters: attempts below the count misbehave.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseCounts {
    pub none: u32,
    pub empty: u32,
    pub nonempty: u32,
}

impl PhaseCounts {
    pub fn get(&self, phase: Phase) -> u32 {
        match phase {
            Phase::None => self.none,
            Phase::Empty => self.empty,
            Phase::Nonempty => self.nonempty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "do", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    Say {
        text: String,
    },
    /// A literal tool call.
    Tool {
        name: String,
        arguments: Value,
    },
    /// Search the journal and skim posts for notes on this problem.
    Recall,
    /// Write a solution and run the tests.
    Attempt {
        correct: bool,
    },
    /// Write the configured number of journal entries.
    Reflect,
    /// Log in and publish the configured number of posts.
    Share,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Script {
    /// Unsolvable scripts never write the passing solution.
    pub solvable: bool,
    pub turns: u32,
    /// Turn count when earlier knowledge about the problem was retrieved.
    pub turns_with_knowledge: Option<u32>,
    pub wrong_attempts: u32,
    pub search_first: bool,
    pub journal_entries: u32,
    pub posts: u32,
    /// Post after the solution passes rather than before starting.
    pub celebrate: bool,
    /// Attempts that crash, per phase.
    pub crash_attempts: PhaseCounts,
    /// Attempts that hang past the deadline, per phase.
    pub stall_attempts: PhaseCounts,
    pub steps: Option<Vec<Step>>,
}

impl Default for Script {
    fn default() -> Self {
        Self {
            solvable: true,
            turns: 10,
            turns_with_knowledge: None,
            wrong_attempts: 0,
            search_first: true,
            journal_entries: 1,
            posts: 1,
            celebrate: true,
            crash_attempts: PhaseCounts::default(),
            stall_attempts: PhaseCounts::default(),
            steps: None,
        }
    }
}

impl Script {
    pub fn steps(&self) -> Vec<Step> {
        if let Some(steps) = &self.steps {
            return steps.clone();
        }
        let mut steps = vec![Step::Say {
            text: "Reading the problem statement.".into(),
        }];
        if self.search_first {
            steps.push(Step::Recall);
        }
        if !self.celebrate {
            steps.push(Step::Share);
        }
        steps.extend((0..self.wrong_attempts).map(|_| Step::Attempt { correct: false }));
        steps.push(Step::Attempt { correct: self.solvable });
        steps.push(Step::Reflect);
        if self.celebrate {
            steps.push(Step::Share);
        }
        steps
    }
}

pub struct ScriptedRunner {
    seed: u64,
    scripts: BTreeMap<String, Script>,
}

impl ScriptedRunner {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            scripts: BTreeMap::new(),
        }
    }

    pub fn with_script(mut self, problem: impl Into<String>, script: Script) -> Self {
        self.scripts.insert(problem.into(), script);
        self
    }

    /// Loads every `<problem>.json` under `dir`.
    pub fn from_dir(seed: u64, dir: &Path) -> Result<Self, String> {
        let mut runner = Self::new(seed);
        let entries = std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let raw = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            let script: Script = serde_json::from_str(&raw).map_err(|e| format!("{}: {e}", path.display()))?;
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            runner.scripts.insert(stem, script);
        }
        Ok(runner)
    }

    pub fn script(&self, problem: &str) -> Script {
        self.scripts.get(problem).cloned().unwrap_or_default()
    }

    fn rng(&self, env: &AgentEnv<'_>) -> ChaCha20Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        for part in [
            env.run.model_label.as_str(),
            env.run.variant.as_str(),
            env.run.phase.as_str(),
            env.run.problem_id.as_str(),
        ] {
            h.update(part.as_bytes());
            h.update([0]);
        }
        h.update(env.run.repetition.to_le_bytes());
        h.update(env.attempt.to_le_bytes());
        ChaCha20Rng::from_seed(h.finalize().into())
    }
}

/// Marker placed at the start of every journal entry and post the agent
/// writes, so later runs can recognise notes about the same problem.
pub fn knowledge_marker(problem: &str) -> String {
    format!("Problem: {problem}.")
}

fn recall(env: &mut AgentEnv<'_>) -> Result<bool, RunnerError> {
    let id = env.problem.id.clone();
    let marker = knowledge_marker(&id);
    let mut found = false;
    if env.has_tool("search_journal") {
        let query = format!("{id} {}", env.problem.description);
        let reply = env.call_tool("search_journal", json!({"query": query, "limit": 5}))?;
        let relevant: Vec<String> = reply
            .structured
            .as_ref()
            .and_then(|s| s["hits"].as_array())
            .into_iter()
            .flatten()
            .filter(|h| h["snippet"].as_str().is_some_and(|s| s.starts_with(&marker)))
            .filter_map(|h| h["entry_id"].as_str().map(str::to_string))
            .collect();
        for entry_id in relevant.iter().take(2) {
            let entry = env.call_tool("read_entry", json!({"entry_id": entry_id}))?;
            found |= !entry.is_error;
        }
    }
    if env.has_tool("read_posts") {
        let reply = env.call_tool("read_posts", json!({"tag": id, "limit": 10}))?;
        found |= reply.result_count("read_posts").unwrap_or(0) > 0;
    }
    Ok(found)
}

fn reflect(env: &mut AgentEnv<'_>, count: u32) -> Result<(), RunnerError> {
    if !env.has_tool("process_thoughts") {
        return Ok(());
    }
    let marker = knowledge_marker(&env.problem.id);
    for i in 0..count {
        let args = json!({
            "technical_insights": format!(
                "{marker} Every case in problem.json maps a named input to a fixed expected value; \
                 answering from the table passes all {} tests.",
                env.problem.tests.len()
            ),
            "reflective_observations": format!("Note {} for {}: reading the tests first saved time.", i + 1, env.problem.id),
        });
        env.call_tool("process_thoughts", args)?;
    }
    Ok(())
}

fn share(env: &mut AgentEnv<'_>, count: u32) -> Result<(), RunnerError> {
    if count == 0 || !env.has_tool("create_post") {
        return Ok(());
    }
    env.call_tool("login", json!({"agent_name": AGENT_NAME}))?;
    let marker = knowledge_marker(&env.problem.id);
    for i in 0..count {
        let body = format!(
            "{marker} Solved it by reading the expected values straight from the tests. ({})",
            i + 1
        );
        env.call_tool("create_post", json!({"body": body, "tags": [env.problem.id]}))?;
    }
    Ok(())
}

fn synthetic_usage(rng: &mut ChaCha20Rng, turns: u32) -> (TokenCounts, f64) {
    let mut t = TokenCounts::default();
    for _ in 0..turns {
        t = t + TokenCounts::new(
            rng.random_range(2..=12),
            rng.random_range(150..=600),
            rng.random_range(400..=2_500),
            rng.random_range(8_000..=30_000),
        );
    }
    let cost = [t.input, t.output, t.cache_create, t.cache_read]
        .iter()
        .zip(PRICES_PER_MTOK)
        .map(|(n, price)| *n as f64 * price / 1e6)
        .sum();
    (t, cost)
}

impl AgentRunner for ScriptedRunner {
    fn name(&self) -> &str {
        "scripted"
    }

    fn run(&self, env: &mut AgentEnv<'_>) -> Result<RunnerReport, RunnerError> {
        let script = self.script(&env.problem.id);
        let phase = env.run.phase;
        if env.attempt < script.crash_attempts.get(phase) {
            env.say("Scripted crash.");
            return Err(RunnerError::Crash(format!("scripted crash on attempt {}", env.attempt)));
        }
        if env.attempt < script.stall_attempts.get(phase) {
            env.say("Scripted stall.");
            return Err(RunnerError::Timeout(env.timeout));
        }

        let mut knowledge = false;
        for step in script.steps() {
            match step {
                Step::Say { text } => env.say(text),
                Step::Tool { name, arguments } => {
                    env.call_tool(&name, arguments)?;
                }
                Step::Recall => knowledge |= recall(env)?,
                Step::Attempt { correct } => {
                    let solution = if correct {
                        env.problem.reference_solution()
                    } else {
                        env.problem.broken_solution()
                    };
                    env.write_solution(&solution)?;
                    env.run_tests();
                }
                Step::Reflect => reflect(env, script.journal_entries)?,
                Step::Share => share(env, script.posts)?,
            }
        }

        let turns = match script.turns_with_knowledge {
            Some(t) if knowledge => t,
            _ => script.turns,
        };
        let (tokens, cost_usd) = synthetic_usage(&mut self.rng(env), turns);
        Ok(RunnerReport {
            cost_usd,
            turns,
            tokens,
        })
    }
}

//! Drives the run matrix against a backend and an agent runner.
//!
//! Workspace layout:
//!
//! ```text
//! <workspace>/botboard.sqlite          embedded backend store
//! <workspace>/teams.json               credentials of every team provisioned
//! <workspace>/records.jsonl            every RunRecord, all attempts
//! <workspace>/logs/<model>/<variant>-<phase>/<problem>-<rep>.json
//! <workspace>/logs-superseded/...      earlier attempts replaced by a re-run
//! <workspace>/exports/<model>/<variant>-rep<rep>/<stage>.json
//! <workspace>/phase_checks.json
//! <workspace>/remediation.json
//! <workspace>/runs/...                 per-run scratch directories
//! ```

use std::collections::{BTreeMap, VecDeque};
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use botboard_core::model::{Phase, RunRecord, RunStatus, Variant};
use botboard_core::runlog::{RunLog, TranscriptEvent};
use botboard_core::wire::{TeamCredentials, TeamExport};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, BackendHandle};
use crate::clock::{Clock, SystemClock};
use crate::config::{ConfigError, ExperimentConfig, RunnerConfig};
use crate::execute::{execute_run, RunContext};
use crate::plan::{pipelines, plan_runs, Pipeline, PipelineKey, PlannedRun};
use crate::problem::{ProblemError, ProblemSet};
use crate::remediate::{
    completeness, latest_records, plan_remediation_for, Completeness, RemediationAction, TeamPolicy,
};
use crate::runner::{AgentRunner, ExternalCommandRunner};
use crate::scripted::ScriptedRunner;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    State(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn runner_from_config(config: &RunnerConfig) -> Result<Box<dyn AgentRunner>, EvalError> {
    Ok(match config {
        RunnerConfig::Scripted { scripts_dir, seed } => match scripts_dir {
            Some(dir) => Box::new(ScriptedRunner::from_dir(*seed, dir).map_err(EvalError::State)?),
            None => Box::new(ScriptedRunner::new(*seed)),
        },
        RunnerConfig::ExternalCommand { command, env } => {
            if command.is_empty() {
                return Err(EvalError::State("external-command runner needs a command".into()));
            }
            Box::new(ExternalCommandRunner {
                command: command.clone(),
                env: env.clone(),
            })
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeamRecord {
    pub team_id: String,
    pub key: String,
    pub model_label: String,
    pub variant: Variant,
    pub repetition: u32,
    /// Set for teams provisioned by remediation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<u32>,
}

impl TeamRecord {
    pub fn credentials(&self) -> Result<TeamCredentials, EvalError> {
        Ok(TeamCredentials {
            team_id: botboard_core::model::TeamId::new(self.team_id.clone())
                .map_err(|e| EvalError::State(format!("teams.json: {e}")))?,
            key: self.key.clone(),
        })
    }
}

/// Inheritance and isolation observations for one tool pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCheck {
    pub pipeline: PipelineKey,
    pub team_id: String,
    pub nonempty_team_id: String,
    /// The store held nothing when the empty phase began.
    pub empty_start_empty: bool,
    /// Item count returned by the first read or search of the empty phase;
    /// `None` when the phase never read.
    pub first_read_count: Option<usize>,
    /// The nonempty phase's starting export equals the empty phase's final
    /// export byte for byte.
    pub handoff_identical: bool,
}

impl PhaseCheck {
    pub fn holds(&self) -> bool {
        self.team_id == self.nonempty_team_id
            && self.empty_start_empty
            && self.first_read_count.unwrap_or(0) == 0
            && self.handoff_identical
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunSummary {
    pub planned: usize,
    pub executed: usize,
    pub infra_failures: usize,
    pub phase_checks: Vec<PhaseCheck>,
    pub pipeline_errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppliedAction {
    pub pass: u32,
    #[serde(flatten)]
    pub action: RemediationAction,
    pub policy: TeamPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub team_id: Option<String>,
    /// (phase, attempt, status) of every re-executed run.
    pub reruns: Vec<(Phase, u32, RunStatus)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RemediationSummary {
    pub applied: Vec<AppliedAction>,
    pub completeness: Completeness,
}

struct Collector {
    tx: Sender<RunLog>,
    handle: std::thread::JoinHandle<Result<Vec<RunRecord>, EvalError>>,
}

impl Collector {
    /// The only writer of logs and records.
    fn start(workspace: PathBuf) -> Self {
        let (tx, rx) = mpsc::channel::<RunLog>();
        let handle = std::thread::spawn(move || {
            let mut written = Vec::new();
            for log in rx {
                write_log(&workspace, &log)?;
                written.push(log.record);
            }
            Ok(written)
        });
        Self { tx, handle }
    }

    fn finish(self) -> Result<Vec<RunRecord>, EvalError> {
        drop(self.tx);
        self.handle
            .join()
            .map_err(|_| EvalError::State("log collector panicked".into()))?
    }
}

fn write_log(workspace: &Path, log: &RunLog) -> Result<(), EvalError> {
    let r = &log.record;
    let run = PlannedRun {
        model_label: r.model_label.clone(),
        variant: r.variant,
        phase: r.phase,
        problem_id: r.problem_id.clone(),
        repetition: r.repetition,
    };
    let rel = run.log_relpath();
    let path = workspace.join("logs").join(&rel);
    let parent = path.parent().expect("log path has a parent");
    std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    if let Ok(raw) = std::fs::read(&path) {
        let old_attempt = serde_json::from_slice::<RunLog>(&raw)
            .map(|l| l.record.attempt)
            .unwrap_or(u32::MAX);
        let dest = workspace
            .join("logs-superseded")
            .join(rel.with_extension(format!("attempt{old_attempt}.json")));
        let dest_parent = dest.parent().expect("has parent");
        std::fs::create_dir_all(dest_parent).map_err(io_err(dest_parent))?;
        std::fs::rename(&path, &dest).map_err(io_err(&dest))?;
    }
    let json = serde_json::to_vec_pretty(log).map_err(|e| EvalError::State(e.to_string()))?;
    std::fs::write(&path, json).map_err(io_err(&path))?;
    let records = workspace.join("records.jsonl");
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&records)
        .map_err(io_err(&records))?;
    let line = serde_json::to_string(r).map_err(|e| EvalError::State(e.to_string()))?;
    writeln!(f, "{line}").map_err(io_err(&records))
}

pub struct Orchestrator {
    config: ExperimentConfig,
    backend: BackendHandle,
    runner: Box<dyn AgentRunner>,
    clock: Arc<dyn Clock>,
    problems: ProblemSet,
    instructions: BTreeMap<Variant, Option<String>>,
    teams: Mutex<BTreeMap<String, TeamRecord>>,
}

impl Orchestrator {
    pub fn from_config(config: ExperimentConfig) -> Result<Self, EvalError> {
        let runner = runner_from_config(&config.runner)?;
        Self::new(config, runner)
    }

    pub fn new(config: ExperimentConfig, runner: Box<dyn AgentRunner>) -> Result<Self, EvalError> {
        config.validate()?;
        let root = &config.workspace_root;
        std::fs::create_dir_all(root).map_err(io_err(root))?;
        let problems = ProblemSet::load(config.problems_dir.as_deref(), &config.problems)?;
        let instructions = config
            .variants
            .iter()
            .map(|v| Ok((*v, config.instructions(*v)?)))
            .collect::<Result<_, ConfigError>>()?;
        let backend = BackendHandle::connect(&config)?;
        let teams = read_json_or_default(&root.join("teams.json"))?;
        Ok(Self {
            config,
            backend,
            runner,
            clock: Arc::new(SystemClock::new()),
            problems,
            instructions,
            teams: Mutex::new(teams),
        })
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn backend(&self) -> &BackendHandle {
        &self.backend
    }

    pub fn plan(&self) -> Vec<PlannedRun> {
        plan_runs(&self.config).expect("validated in new")
    }

    fn workspace(&self) -> &Path {
        &self.config.workspace_root
    }

    fn ctx(&self) -> RunContext<'_> {
        RunContext {
            workspace_root: self.workspace(),
            backend_url: self.backend.url(),
            timeout: Duration::from_secs(self.config.timeout_s),
            mcp_command: self.config.mcp_command.as_deref(),
            clock: self.clock.as_ref(),
            runner: self.runner.as_ref(),
        }
    }

    fn execute(&self, run: &PlannedRun, attempt: u32, team: Option<&TeamCredentials>) -> Result<RunLog, EvalError> {
        let problem = self
            .problems
            .get(&run.problem_id)
            .ok_or_else(|| EvalError::State(format!("unknown problem {}", run.problem_id)))?;
        let instructions = self.instructions.get(&run.variant).cloned().flatten();
        Ok(execute_run(&self.ctx(), run, attempt, problem, instructions, team))
    }

    fn remember_team(&self, name: String, record: TeamRecord) -> Result<(), EvalError> {
        let mut teams = self.teams.lock().expect("teams lock");
        teams.insert(name, record);
        write_json(&self.workspace().join("teams.json"), &*teams)
    }

    pub fn teams(&self) -> BTreeMap<String, TeamRecord> {
        self.teams.lock().expect("teams lock").clone()
    }

    /// Every record written so far, all attempts, in write order.
    pub fn records(&self) -> Result<Vec<RunRecord>, EvalError> {
        read_records(&self.workspace().join("records.jsonl"))
    }

    fn export_to(&self, team: &TeamCredentials, path: &Path) -> Result<Vec<u8>, EvalError> {
        let bytes = self.backend.export(&team.key)?;
        let parent = path.parent().expect("export path has a parent");
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        std::fs::write(path, &bytes).map_err(io_err(path))?;
        Ok(bytes)
    }

    /// Executes the whole matrix once. Refuses to run over a workspace that
    /// already holds records; use [`Orchestrator::remediate`] to fill gaps.
    pub fn run(&self) -> Result<RunSummary, EvalError> {
        if !self.records()?.is_empty() {
            return Err(EvalError::State(format!(
                "{} already holds run records; use remediate to re-run failures",
                self.workspace().display()
            )));
        }
        let plan = self.plan();
        let queue = Mutex::new(pipelines(&plan).into_iter().collect::<VecDeque<Pipeline>>());
        let checks = Mutex::new(Vec::new());
        let errors = Mutex::new(Vec::new());
        let collector = Collector::start(self.workspace().to_path_buf());
        let workers = self.config.parallelism.min(queue.lock().expect("queue").len()).max(1);
        std::thread::scope(|s| {
            for _ in 0..workers {
                let tx = collector.tx.clone();
                let (queue, checks, errors) = (&queue, &checks, &errors);
                s.spawn(move || loop {
                    let Some(pipeline) = queue.lock().expect("queue").pop_front() else {
                        break;
                    };
                    match self.run_pipeline(&pipeline, &tx) {
                        Ok(Some(check)) => checks.lock().expect("checks").push(check),
                        Ok(None) => {}
                        Err(e) => errors.lock().expect("errors").push(format!("{}: {e}", pipeline.key)),
                    }
                });
            }
        });
        let written = collector.finish()?;
        let mut phase_checks = checks.into_inner().expect("checks");
        phase_checks.sort_by(|a, b| a.pipeline.cmp(&b.pipeline));
        write_json(&self.workspace().join("phase_checks.json"), &phase_checks)?;
        Ok(RunSummary {
            planned: plan.len(),
            executed: written.len(),
            infra_failures: written.iter().filter(|r| !r.is_ok()).count(),
            phase_checks,
            pipeline_errors: errors.into_inner().expect("errors"),
        })
    }

    fn run_pipeline(&self, pipeline: &Pipeline, tx: &Sender<RunLog>) -> Result<Option<PhaseCheck>, EvalError> {
        let send = |log: RunLog| {
            tx.send(log)
                .map_err(|_| EvalError::State("log collector stopped".into()))
        };
        let key = &pipeline.key;
        if !key.variant.uses_tools() {
            for run in &pipeline.runs {
                send(self.execute(run, 0, None)?)?;
            }
            return Ok(None);
        }

        let team = self
            .backend
            .provision_team(key.variant, Phase::Empty, None)?
            .expect("tool variants get a team");
        self.remember_team(
            key.to_string(),
            TeamRecord {
                team_id: team.team_id.to_string(),
                key: team.key.clone(),
                model_label: key.model_label.clone(),
                variant: key.variant,
                repetition: key.repetition,
                problem_id: None,
                attempt: None,
            },
        )?;
        let dir = self
            .workspace()
            .join("exports")
            .join(&key.model_label)
            .join(format!("{}-rep{}", key.variant, key.repetition));

        let start = self.export_to(&team, &dir.join("empty-start.json"))?;
        let empty_start_empty = serde_json::from_slice::<TeamExport>(&start)
            .map(|e| e.is_empty())
            .unwrap_or(false);
        let mut first_read_count = None;
        let mut seen_read = false;
        for run in pipeline.runs.iter().filter(|r| r.phase == Phase::Empty) {
            let log = self.execute(run, 0, Some(&team))?;
            if !seen_read {
                if let Some(count) = first_read(&log.transcript) {
                    seen_read = true;
                    first_read_count = Some(count);
                }
            }
            send(log)?;
        }
        let end = self.export_to(&team, &dir.join("empty-end.json"))?;

        let inherited = self
            .backend
            .provision_team(key.variant, Phase::Nonempty, Some(&team))?
            .expect("inherits");
        let handoff = self.export_to(&inherited, &dir.join("nonempty-start.json"))?;
        for run in pipeline.runs.iter().filter(|r| r.phase == Phase::Nonempty) {
            send(self.execute(run, 0, Some(&inherited))?)?;
        }
        self.export_to(&inherited, &dir.join("nonempty-end.json"))?;

        Ok(Some(PhaseCheck {
            pipeline: key.clone(),
            team_id: team.team_id.to_string(),
            nonempty_team_id: inherited.team_id.to_string(),
            empty_start_empty,
            first_read_count,
            handoff_identical: handoff == end,
        }))
    }

    /// Applies the re-run policy until the matrix is complete or the pass
    /// budget is spent.
    pub fn remediate(&self) -> Result<RemediationSummary, EvalError> {
        let plan = self.plan();
        let log_path = self.workspace().join("remediation.json");
        let mut history: Vec<AppliedAction> = read_json_or_default(&log_path)?;
        let first_pass = history.iter().map(|a| a.pass).max().map_or(1, |p| p + 1);
        let mut applied = Vec::new();
        for pass in first_pass..first_pass + self.config.remediation_passes {
            let records = self.records()?;
            let actions = plan_remediation_for(&plan, &records);
            if actions.is_empty() {
                break;
            }
            let latest: BTreeMap<PlannedRun, u32> = latest_records(&records)
                .into_iter()
                .map(|(run, r)| (run, r.attempt))
                .collect();
            let collector = Collector::start(self.workspace().to_path_buf());
            let mut pass_result = Ok(());
            for action in actions {
                match self.apply(pass, &action, &latest, &collector.tx) {
                    Ok(a) => applied.push(a),
                    Err(e) => {
                        pass_result = Err(e);
                        break;
                    }
                }
            }
            collector.finish()?;
            history.extend(applied.iter().filter(|a| a.pass == pass).cloned());
            write_json(&log_path, &history)?;
            pass_result?;
        }
        let completeness = completeness(&plan, &self.records()?);
        Ok(RemediationSummary { applied, completeness })
    }

    fn apply(
        &self,
        pass: u32,
        action: &RemediationAction,
        latest: &BTreeMap<PlannedRun, u32>,
        tx: &Sender<RunLog>,
    ) -> Result<AppliedAction, EvalError> {
        let key = action.key();
        let next_attempt = |run: &PlannedRun| latest.get(run).map_or(0, |a| a + 1);
        let policy = action.team_policy();
        let team = match policy {
            TeamPolicy::NoTeam => None,
            TeamPolicy::SameTeam => {
                let name = PipelineKey {
                    model_label: key.model_label.clone(),
                    variant: key.variant,
                    repetition: key.repetition,
                }
                .to_string();
                let record = self
                    .teams()
                    .get(&name)
                    .cloned()
                    .ok_or_else(|| EvalError::State(format!("no recorded team for pipeline {name}")))?;
                Some(record.credentials()?)
            }
            TeamPolicy::NewTeam => {
                let team = self.backend.fresh_team()?;
                let attempt = next_attempt(&key.run(action.phases()[0]));
                self.remember_team(
                    format!(
                        "{}/{}/{}/{}/a{attempt}",
                        key.model_label, key.variant, key.repetition, key.problem_id
                    ),
                    TeamRecord {
                        team_id: team.team_id.to_string(),
                        key: team.key.clone(),
                        model_label: key.model_label.clone(),
                        variant: key.variant,
                        repetition: key.repetition,
                        problem_id: Some(key.problem_id.clone()),
                        attempt: Some(attempt),
                    },
                )?;
                Some(team)
            }
        };
        let mut reruns = Vec::new();
        for phase in action.phases() {
            let run = key.run(*phase);
            let attempt = next_attempt(&run);
            let log = self.execute(&run, attempt, team.as_ref())?;
            reruns.push((*phase, attempt, log.record.status));
            tx.send(log)
                .map_err(|_| EvalError::State("log collector stopped".into()))?;
        }
        Ok(AppliedAction {
            pass,
            action: action.clone(),
            policy,
            team_id: team.map(|t| t.team_id.to_string()),
            reruns,
        })
    }

    /// Dumps every provisioned team's store to `<workspace>/exports/teams/<team>.json`.
    pub fn export_all(&self) -> Result<Vec<PathBuf>, EvalError> {
        let dir = self.workspace().join("exports").join("teams");
        let mut written = Vec::new();
        for record in self.teams().values() {
            let path = dir.join(format!("{}.json", record.team_id));
            self.export_to(&record.credentials()?, &path)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Item count of the first read or search in a transcript.
pub fn first_read(transcript: &[TranscriptEvent]) -> Option<usize> {
    transcript.iter().find_map(|e| match e {
        TranscriptEvent::ToolCall { name, result_count, .. }
            if matches!(name.as_str(), "read_posts" | "search_journal" | "list_recent") =>
        {
            Some(result_count.unwrap_or(0))
        }
        _ => None,
    })
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>, EvalError> {
    let file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record =
            serde_json::from_str(&line).map_err(|e| EvalError::State(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(record);
    }
    Ok(out)
}

fn read_json_or_default<T: serde::de::DeserializeOwned + Default>(path: &Path) -> Result<T, EvalError> {
    match std::fs::read(path) {
        Ok(raw) => serde_json::from_slice(&raw).map_err(|e| EvalError::State(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(T::default()),
        Err(e) => Err(io_err(path)(e)),
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), EvalError> {
    let json = serde_json::to_vec_pretty(value).map_err(|e| EvalError::State(e.to_string()))?;
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, json).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

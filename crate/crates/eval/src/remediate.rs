//! Re-run policy for infrastructure failures.
//!
//! Tool-variant runs are judged in (empty, nonempty) pairs so that a re-run
//! never sees a store its original would not have seen:
//!
//! | empty | nonempty | action                                   |
//! |-------|----------|------------------------------------------|
//! | fail  | fail     | re-run both on a fresh isolated team     |
//! | fail  | ok       | re-run empty on a fresh team, keep nonempty |
//! | ok    | fail     | re-run nonempty on the original team     |
//!
//! A failed baseline run is simply re-run.

use std::collections::BTreeMap;
use std::fmt;

use botboard_core::model::{Phase, RunRecord, Variant};
use serde::{Deserialize, Serialize};

use crate::plan::PlannedRun;

/// Identifies an (empty, nonempty) pair, or a single baseline run.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairKey {
    pub model_label: String,
    pub variant: Variant,
    pub problem_id: String,
    pub repetition: u32,
}

impl PairKey {
    pub fn run(&self, phase: Phase) -> PlannedRun {
        PlannedRun {
            model_label: self.model_label.clone(),
            variant: self.variant,
            phase,
            problem_id: self.problem_id.clone(),
            repetition: self.repetition,
        }
    }
}

impl fmt::Display for PairKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}#{}",
            self.model_label, self.variant, self.problem_id, self.repetition
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TeamPolicy {
    /// A newly provisioned team holding nothing but the re-run's own writes.
    NewTeam,
    /// The pipeline's team, as accumulated by its empty phase.
    SameTeam,
    /// Baseline runs have no team.
    NoTeam,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum RemediationAction {
    RerunBoth { key: PairKey },
    RerunEmpty { key: PairKey },
    RerunNonempty { key: PairKey },
    RerunBaseline { key: PairKey },
}

impl RemediationAction {
    pub fn key(&self) -> &PairKey {
        match self {
            RemediationAction::RerunBoth { key }
            | RemediationAction::RerunEmpty { key }
            | RemediationAction::RerunNonempty { key }
            | RemediationAction::RerunBaseline { key } => key,
        }
    }

    pub fn team_policy(&self) -> TeamPolicy {
        match self {
            RemediationAction::RerunBoth { .. } | RemediationAction::RerunEmpty { .. } => TeamPolicy::NewTeam,
            RemediationAction::RerunNonempty { .. } => TeamPolicy::SameTeam,
            RemediationAction::RerunBaseline { .. } => TeamPolicy::NoTeam,
        }
    }

    /// Phases re-executed, in order.
    pub fn phases(&self) -> &'static [Phase] {
        match self {
            RemediationAction::RerunBoth { .. } => &[Phase::Empty, Phase::Nonempty],
            RemediationAction::RerunEmpty { .. } => &[Phase::Empty],
            RemediationAction::RerunNonempty { .. } => &[Phase::Nonempty],
            RemediationAction::RerunBaseline { .. } => &[Phase::None],
        }
    }

    pub fn describe(&self) -> &'static str {
        match self {
            RemediationAction::RerunBoth { .. } => "rerun-both, new team",
            RemediationAction::RerunEmpty { .. } => "rerun-empty, new team",
            RemediationAction::RerunNonempty { .. } => "rerun-nonempty, same team",
            RemediationAction::RerunBaseline { .. } => "rerun-baseline",
        }
    }
}

impl fmt::Display for RemediationAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.describe(), self.key())
    }
}

/// The highest-attempt record for every run.
pub fn latest_records(records: &[RunRecord]) -> BTreeMap<PlannedRun, &RunRecord> {
    let mut latest: BTreeMap<PlannedRun, &RunRecord> = BTreeMap::new();
    for r in records {
        let run = PlannedRun {
            model_label: r.model_label.clone(),
            variant: r.variant,
            phase: r.phase,
            problem_id: r.problem_id.clone(),
            repetition: r.repetition,
        };
        match latest.get(&run) {
            Some(prev) if prev.attempt >= r.attempt => {}
            _ => {
                latest.insert(run, r);
            }
        }
    }
    latest
}

/// Actions for every run seen in `records`, judged by its latest attempt.
pub fn plan_remediation(records: &[RunRecord]) -> Vec<RemediationAction> {
    decide(latest_records(records).into_iter().map(|(run, r)| (run, r.is_ok())))
}

/// Like [`plan_remediation`], but over the planned matrix: runs with no
/// record at all count as failed.
pub fn plan_remediation_for(plan: &[PlannedRun], records: &[RunRecord]) -> Vec<RemediationAction> {
    let latest = latest_records(records);
    decide(
        plan.iter()
            .map(|run| (run.clone(), latest.get(run).is_some_and(|r| r.is_ok()))),
    )
}

fn decide(statuses: impl IntoIterator<Item = (PlannedRun, bool)>) -> Vec<RemediationAction> {
    let mut pairs: BTreeMap<PairKey, (Option<bool>, Option<bool>)> = BTreeMap::new();
    let mut actions = Vec::new();
    for (run, ok) in statuses {
        let key = PairKey {
            model_label: run.model_label,
            variant: run.variant,
            problem_id: run.problem_id,
            repetition: run.repetition,
        };
        match run.phase {
            Phase::None => {
                if !ok {
                    actions.push(RemediationAction::RerunBaseline { key });
                }
            }
            Phase::Empty => pairs.entry(key).or_default().0 = Some(ok),
            Phase::Nonempty => pairs.entry(key).or_default().1 = Some(ok),
        }
    }
    for (key, (empty, nonempty)) in pairs {
        // A half-recorded pair (the other phase never ran) counts the
        // missing side as failed.
        let action = match (empty.unwrap_or(false), nonempty.unwrap_or(false)) {
            (true, true) => continue,
            (false, false) => RemediationAction::RerunBoth { key },
            (false, true) => RemediationAction::RerunEmpty { key },
            (true, false) => RemediationAction::RerunNonempty { key },
        };
        actions.push(action);
    }
    actions.sort_by(|a, b| a.key().cmp(b.key()));
    actions
}

/// How the recorded runs cover the plan.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Completeness {
    pub planned: usize,
    pub ok: usize,
    pub failed: Vec<PlannedRun>,
    pub missing: Vec<PlannedRun>,
    /// Runs with more than one ok record.
    pub duplicated: Vec<PlannedRun>,
}

impl Completeness {
    pub fn is_complete(&self) -> bool {
        self.ok == self.planned && self.failed.is_empty() && self.missing.is_empty() && self.duplicated.is_empty()
    }
}

pub fn completeness(plan: &[PlannedRun], records: &[RunRecord]) -> Completeness {
    let latest = latest_records(records);
    let mut ok_counts: BTreeMap<PlannedRun, usize> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok()) {
        let run = PlannedRun {
            model_label: r.model_label.clone(),
            variant: r.variant,
            phase: r.phase,
            problem_id: r.problem_id.clone(),
            repetition: r.repetition,
        };
        *ok_counts.entry(run).or_default() += 1;
    }
    let mut c = Completeness {
        planned: plan.len(),
        ..Completeness::default()
    };
    for run in plan {
        match latest.get(run) {
            None => c.missing.push(run.clone()),
            Some(r) if r.is_ok() => c.ok += 1,
            Some(_) => c.failed.push(run.clone()),
        }
        if ok_counts.get(run).copied().unwrap_or(0) > 1 {
            c.duplicated.push(run.clone());
        }
    }
    c
}

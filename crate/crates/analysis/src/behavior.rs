use botboard_core::model::{ToolAction, ToolKind};
use botboard_core::runlog::RunLog;
use serde::Serialize;

use crate::stats::round_to;
use crate::AnalysisError;

/// Printed in place of a write/read ratio with no reads.
pub const UNDEFINED_RATIO: &str = "∞";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CelebratoryClass {
    /// No tool events at all.
    None,
    /// Every tool event happened after the solution was complete.
    PurePostCompletion,
    /// Tool events on both sides of completion.
    Mixed,
    /// Tool events, all before completion.
    PreCompletion,
}

pub fn classify_celebratory(log: &RunLog) -> Result<CelebratoryClass, AnalysisError> {
    if log.completion_at.is_none() {
        return Err(AnalysisError::MissingCompletionMarker(log.record.problem_id.clone()));
    }
    let events = &log.record.tool_events;
    let after = events.iter().filter(|e| e.after_completion).count();
    Ok(match (events.len(), after) {
        (0, _) => CelebratoryClass::None,
        (n, a) if a == n => CelebratoryClass::PurePostCompletion,
        (_, 0) => CelebratoryClass::PreCompletion,
        _ => CelebratoryClass::Mixed,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BehaviorSummary {
    pub runs: usize,
    pub journal_writes: u64,
    pub journal_reads: u64,
    pub journal_searches: u64,
    pub social_writes: u64,
    pub social_reads: u64,
    pub social_logins: u64,
    pub pure_post_completion: usize,
    pub mixed: usize,
    pub pre_completion: usize,
    pub no_tool_use: usize,
    /// Runs with tool events but no completion marker (never solved).
    pub unmarked: usize,
}

impl BehaviorSummary {
    /// Journal writes per journal retrieval (reads plus searches).
    pub fn journal_ratio(&self) -> Option<f64> {
        ratio(self.journal_writes, self.journal_reads + self.journal_searches)
    }

    pub fn social_ratio(&self) -> Option<f64> {
        ratio(self.social_writes, self.social_reads)
    }

    /// Share of celebratory runs (any post-completion event) that are pure.
    pub fn celebratory_rate(&self) -> Option<f64> {
        let celebratory = self.pure_post_completion + self.mixed;
        (celebratory > 0).then(|| self.pure_post_completion as f64 / celebratory as f64)
    }
}

fn ratio(writes: u64, reads: u64) -> Option<f64> {
    (reads > 0).then(|| writes as f64 / reads as f64)
}

pub fn format_ratio(r: Option<f64>) -> String {
    match r {
        Some(r) => format!("{:.1}", round_to(r, 1)),
        None => UNDEFINED_RATIO.to_string(),
    }
}

pub fn behavior_summary<'a>(logs: impl IntoIterator<Item = &'a RunLog>) -> BehaviorSummary {
    let mut s = BehaviorSummary::default();
    for log in logs {
        s.runs += 1;
        for e in &log.record.tool_events {
            let slot = match (e.tool, e.action) {
                (ToolKind::Journal, ToolAction::Write) => &mut s.journal_writes,
                (ToolKind::Journal, ToolAction::Read) => &mut s.journal_reads,
                (ToolKind::Journal, ToolAction::Search) => &mut s.journal_searches,
                (ToolKind::Social, ToolAction::Write) => &mut s.social_writes,
                (ToolKind::Social, ToolAction::Read | ToolAction::Search) => &mut s.social_reads,
                (_, ToolAction::Login) => &mut s.social_logins,
            };
            *slot += 1;
        }
        match classify_celebratory(log) {
            Ok(CelebratoryClass::None) => s.no_tool_use += 1,
            Ok(CelebratoryClass::PurePostCompletion) => s.pure_post_completion += 1,
            Ok(CelebratoryClass::Mixed) => s.mixed += 1,
            Ok(CelebratoryClass::PreCompletion) => s.pre_completion += 1,
            Err(_) if log.record.tool_events.is_empty() => s.no_tool_use += 1,
            Err(_) => s.unmarked += 1,
        }
    }
    s
}

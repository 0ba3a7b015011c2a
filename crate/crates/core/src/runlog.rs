//! Per-run JSON logs: the run record plus the full interaction transcript.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::RunRecord;
use crate::time;

/// Prompt text handed to the agent, kept verbatim.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub task: String,
    pub tool_instructions: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TranscriptEvent {
    Message {
        #[serde(with = "time::micros")]
        at: DateTime<Utc>,
        text: String,
    },
    ToolCall {
        #[serde(with = "time::micros")]
        at: DateTime<Utc>,
        name: String,
        arguments: Value,
        is_error: bool,
        /// Number of items a read/search returned, when the tool reports one.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        result_count: Option<usize>,
        #[serde(default)]
        result_text: String,
    },
    FileEdit {
        #[serde(with = "time::micros")]
        at: DateTime<Utc>,
        path: String,
    },
    TestRun {
        #[serde(with = "time::micros")]
        at: DateTime<Utc>,
        passed: u32,
        total: u32,
    },
    Failure {
        #[serde(with = "time::micros")]
        at: DateTime<Utc>,
        reason: String,
    },
}

impl TranscriptEvent {
    pub fn at(&self) -> DateTime<Utc> {
        match self {
            TranscriptEvent::Message { at, .. }
            | TranscriptEvent::ToolCall { at, .. }
            | TranscriptEvent::FileEdit { at, .. }
            | TranscriptEvent::TestRun { at, .. }
            | TranscriptEvent::Failure { at, .. } => *at,
        }
    }
}

/// Timestamp of the last file edit before the first fully passing test run.
pub fn completion_marker(transcript: &[TranscriptEvent]) -> Option<DateTime<Utc>> {
    let mut last_edit = None;
    for event in transcript {
        match event {
            TranscriptEvent::FileEdit { at, .. } => last_edit = Some(*at),
            TranscriptEvent::TestRun { passed, total, .. } if *total > 0 && passed == total => {
                return last_edit;
            }
            _ => {}
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub record: RunRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub team_id: Option<String>,
    pub prompt: PromptRecord,
    #[serde(default, with = "time::micros_opt")]
    pub completion_at: Option<DateTime<Utc>>,
    pub transcript: Vec<TranscriptEvent>,
}

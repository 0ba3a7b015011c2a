//! Statistics over evaluation runs: cost/turn/latency distributions, percent
//! deltas against baseline, hard-question selection, token means, and
//! tool-usage behavior. [`report::emit_report`] renders all of it.

use thiserror::Error;

pub mod behavior;
pub mod hard;
pub mod report;
pub mod stats;
pub mod tokens;

pub use behavior::{behavior_summary, classify_celebratory, BehaviorSummary, CelebratoryClass};
pub use hard::{select_from_means, select_hard_questions, HardQuestionSet};
pub use report::{emit_report, Formats, Report, ReportOptions};
pub use stats::{percent_delta, summarize, MetricsSummary, SigmaKind};
pub use tokens::{token_rollup, TokenMeans};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("no values to summarize")]
    EmptyInput,
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("baseline mean must be positive")]
    ZeroBaseline,
    #[error("hard-question selection needs at least 2 problems, got {0}")]
    InsufficientData(usize),
    #[error("records mix models {0:?} and {1:?}")]
    MixedModels(String, String),
    #[error("run log for {0} has no completion marker")]
    MissingCompletionMarker(String),
    #[error("no baseline runs for model {0:?}")]
    MissingBaseline(String),
}

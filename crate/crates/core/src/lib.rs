//! Shared domain types for the Botboard knowledge store and the evaluation
//! tooling built around it, plus the embedding provider and exact cosine
//! search used for journal retrieval.

pub mod embedding;
pub mod model;
pub mod runlog;
pub mod search;
pub mod time;
pub mod wire;

pub use embedding::{cosine, EmbedError, EmbeddingProvider, TrigramEmbedder, DEFAULT_DIMENSION};
pub use model::{
    normalize_tag, validate_run_record, AgentIdentity, EmbeddingVector, JournalEntry, ModelError, Phase, Post,
    RunRecord, RunStatus, SearchHit, TeamId, TokenCounts, ToolAction, ToolEvent, ToolKind, Variant, Violation,
};
pub use runlog::{PromptRecord, RunLog, TranscriptEvent};
pub use search::{search, IndexedEntry, SearchError, VectorIndex};

//! Exact full-scan cosine ranking over one team's journal vectors.

use std::cmp::Ordering;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::embedding::{cosine_slices, EmbedError, EmbeddingProvider};
use crate::model::{EmbeddingVector, SearchHit, TeamId};

pub const SNIPPET_CHARS: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("search query is empty")]
    EmptyQuery,
    #[error("limit must be at least 1")]
    InvalidLimit,
    #[error("entry {0} is already indexed")]
    DuplicateEntry(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexedEntry {
    pub entry_id: String,
    pub created_at: DateTime<Utc>,
    pub snippet: String,
    pub vector: EmbeddingVector,
}

/// Immutable-by-convention vector snapshot. Cloning shares the entries, so a
/// writer can build the next snapshot while readers keep the old one.
#[derive(Debug, Clone)]
pub struct VectorIndex {
    team: TeamId,
    dimension: usize,
    entries: Vec<Arc<IndexedEntry>>,
}

impl VectorIndex {
    pub fn new(team: TeamId, dimension: usize) -> Self {
        Self {
            team,
            dimension,
            entries: Vec::new(),
        }
    }

    pub fn team(&self) -> &TeamId {
        &self.team
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &IndexedEntry> {
        self.entries.iter().map(Arc::as_ref)
    }

    pub fn insert(&mut self, entry: IndexedEntry) -> Result<(), SearchError> {
        if entry.vector.dimension() != self.dimension {
            return Err(EmbedError::DimensionMismatch(self.dimension, entry.vector.dimension()).into());
        }
        if self.entries.iter().any(|e| e.entry_id == entry.entry_id) {
            return Err(SearchError::DuplicateEntry(entry.entry_id));
        }
        self.entries.push(Arc::new(entry));
        Ok(())
    }

    /// Copy of this snapshot with one more entry.
    pub fn with_entry(&self, entry: IndexedEntry) -> Result<Self, SearchError> {
        let mut next = self.clone();
        next.insert(entry)?;
        Ok(next)
    }
}

/// Ranking order: higher score first, then more recent, then smaller id.
pub fn hit_order(a: (f64, &DateTime<Utc>, &str), b: (f64, &DateTime<Utc>, &str)) -> Ordering {
    b.0.total_cmp(&a.0)
        .then_with(|| b.1.cmp(a.1))
        .then_with(|| a.2.cmp(b.2))
}

/// The `limit` entries most similar to `query`.
pub fn search(
    index: &VectorIndex,
    provider: &dyn EmbeddingProvider,
    query: &str,
    limit: usize,
) -> Result<Vec<SearchHit>, SearchError> {
    if query.trim().is_empty() {
        return Err(SearchError::EmptyQuery);
    }
    if limit == 0 {
        return Err(SearchError::InvalidLimit);
    }
    if index.is_empty() {
        return Ok(Vec::new());
    }
    let q = provider.embed(query)?;
    let mut scored = index
        .entries()
        .map(|e| Ok((cosine_slices(q.as_slice(), e.vector.as_slice())?, e)))
        .collect::<Result<Vec<_>, EmbedError>>()?;
    scored.sort_by(|(sa, a), (sb, b)| hit_order((*sa, &a.created_at, &a.entry_id), (*sb, &b.created_at, &b.entry_id)));
    Ok(scored
        .into_iter()
        .take(limit)
        .map(|(score, e)| SearchHit {
            entry_id: e.entry_id.clone(),
            score,
            snippet: e.snippet.clone(),
        })
        .collect())
}

//! JSON bodies exchanged with the Botboard HTTP API.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::model::{JournalEntry, Post, SearchHit, TeamId};
use crate::time;

pub const TEAM_KEY_HEADER: &str = "X-Team-Key";
pub const ADMIN_KEY_HEADER: &str = "X-Admin-Key";
pub const API_PREFIX: &str = "/api/v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreatePost {
    pub author: String,
    pub body: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostList {
    pub posts: Vec<Post>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateJournalEntry {
    pub sections: BTreeMap<String, String>,
}

/// A journal entry as served over HTTP: everything except the embedding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalEntryView {
    pub id: String,
    pub team: TeamId,
    pub sections: BTreeMap<String, String>,
    #[serde(with = "time::micros")]
    pub created_at: DateTime<Utc>,
}

impl From<&JournalEntry> for JournalEntryView {
    fn from(entry: &JournalEntry) -> Self {
        Self {
            id: entry.id.clone(),
            team: entry.team.clone(),
            sections: entry.sections.clone(),
            created_at: entry.created_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalList {
    pub entries: Vec<JournalEntryView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub hits: Vec<SearchHit>,
}

impl SearchResponse {
    /// Wire form: scores rounded to three decimals.
    pub fn rendered(hits: Vec<SearchHit>) -> Self {
        let hits = hits
            .into_iter()
            .map(|h| SearchHit {
                score: round_score(h.score),
                ..h
            })
            .collect();
        Self { hits }
    }
}

pub fn round_score(score: f64) -> f64 {
    (score * 1000.0).round() / 1000.0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvisionTeam {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub team_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeamCredentials {
    pub team_id: TeamId,
    pub key: String,
}

/// Full dump of one team's store, embeddings included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamExport {
    pub team: TeamId,
    pub posts: Vec<Post>,
    pub journal: Vec<JournalEntry>,
}

impl TeamExport {
    pub fn is_empty(&self) -> bool {
        self.posts.is_empty() && self.journal.is_empty()
    }
}

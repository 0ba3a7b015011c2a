//! Client side of the Botboard HTTP API.

use std::collections::BTreeMap;
use std::time::Duration;

use botboard_core::model::Post;
use botboard_core::wire::{
    CreateJournalEntry, CreatePost, ErrorBody, JournalEntryView, JournalList, PostList, SearchResponse, TEAM_KEY_HEADER,
};
use serde::de::DeserializeOwned;
use thiserror::Error;
use url::Url;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend returned {status} {code}: {message}")]
    Http { status: u16, code: String, message: String },
    #[error("backend unreachable: {0}")]
    Transport(String),
    #[error("unexpected backend response: {0}")]
    Decode(String),
}

/// Every operation the tool servers need. Implementations carry the team key.
pub trait Backend: Send {
    fn create_post(&self, author: &str, body: &str, tags: &[String]) -> Result<Post, BackendError>;
    fn list_posts(&self, tag: Option<&str>, limit: Option<u64>) -> Result<PostList, BackendError>;
    fn create_journal_entry(&self, sections: &BTreeMap<String, String>) -> Result<JournalEntryView, BackendError>;
    fn search_journal(&self, query: &str, limit: Option<u64>) -> Result<SearchResponse, BackendError>;
    fn read_entry(&self, id: &str) -> Result<JournalEntryView, BackendError>;
    fn list_recent(&self, limit: Option<u64>) -> Result<JournalList, BackendError>;
}

pub struct HttpBackend {
    base: Url,
    team_key: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(base_url: &str, team_key: impl Into<String>) -> Result<Self, BackendError> {
        let base = Url::parse(base_url).map_err(|e| BackendError::Transport(format!("invalid backend URL: {e}")))?;
        if base.cannot_be_a_base() {
            return Err(BackendError::Transport(format!("invalid backend URL: {base_url}")));
        }
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Ok(Self {
            base,
            team_key: team_key.into(),
            agent,
        })
    }

    fn url(&self, segments: &[&str]) -> Url {
        let mut url = self.base.clone();
        {
            let mut path = url.path_segments_mut().expect("checked in new");
            path.pop_if_empty();
            path.extend(["api", "v1"]);
            path.extend(segments);
        }
        url
    }

    fn get<T: DeserializeOwned>(&self, url: Url, query: &[(&str, String)]) -> Result<T, BackendError> {
        let mut req = self.agent.get(url.as_str()).header(TEAM_KEY_HEADER, &self.team_key);
        for (k, v) in query {
            req = req.query(*k, v);
        }
        decode(req.call())
    }

    fn post<B: serde::Serialize, T: DeserializeOwned>(&self, url: Url, body: &B) -> Result<T, BackendError> {
        let json = serde_json::to_string(body).map_err(|e| BackendError::Decode(e.to_string()))?;
        let resp = self
            .agent
            .post(url.as_str())
            .header(TEAM_KEY_HEADER, &self.team_key)
            .header("Content-Type", "application/json")
            .send(json.as_str());
        decode(resp)
    }
}

fn decode<T: DeserializeOwned>(resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Result<T, BackendError> {
    let mut resp = resp.map_err(|e| BackendError::Transport(e.to_string()))?;
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| BackendError::Transport(e.to_string()))?;
    if (200..300).contains(&status) {
        return serde_json::from_str(&text).map_err(|e| BackendError::Decode(e.to_string()));
    }
    let (code, message) = match serde_json::from_str::<ErrorBody>(&text) {
        Ok(body) => (body.error, body.message),
        Err(_) => ("http_error".to_string(), text),
    };
    Err(BackendError::Http { status, code, message })
}

fn limit_query(limit: Option<u64>) -> Vec<(&'static str, String)> {
    limit.map(|l| ("limit", l.to_string())).into_iter().collect()
}

impl Backend for HttpBackend {
    fn create_post(&self, author: &str, body: &str, tags: &[String]) -> Result<Post, BackendError> {
        let req = CreatePost {
            author: author.to_string(),
            body: body.to_string(),
            tags: tags.to_vec(),
        };
        self.post(self.url(&["posts"]), &req)
    }

    fn list_posts(&self, tag: Option<&str>, limit: Option<u64>) -> Result<PostList, BackendError> {
        let mut query = limit_query(limit);
        if let Some(tag) = tag {
            query.push(("tag", tag.to_string()));
        }
        self.get(self.url(&["posts"]), &query)
    }

    fn create_journal_entry(&self, sections: &BTreeMap<String, String>) -> Result<JournalEntryView, BackendError> {
        let req = CreateJournalEntry {
            sections: sections.clone(),
        };
        self.post(self.url(&["journal"]), &req)
    }

    fn search_journal(&self, query: &str, limit: Option<u64>) -> Result<SearchResponse, BackendError> {
        let mut params = limit_query(limit);
        params.push(("q", query.to_string()));
        self.get(self.url(&["journal", "search"]), &params)
    }

    fn read_entry(&self, id: &str) -> Result<JournalEntryView, BackendError> {
        self.get(self.url(&["journal", id]), &[])
    }

    fn list_recent(&self, limit: Option<u64>) -> Result<JournalList, BackendError> {
        self.get(self.url(&["journal", "recent"]), &limit_query(limit))
    }
}

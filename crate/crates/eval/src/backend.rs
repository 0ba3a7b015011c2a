//! The orchestrator's view of the Botboard backend: team provisioning and
//! store exports. The backend is either started in-process or reached over
//! HTTP.

use std::sync::Arc;
use std::time::Duration;

use botboard_core::model::{Phase, Variant};
use botboard_core::wire::{TeamCredentials, ADMIN_KEY_HEADER, TEAM_KEY_HEADER};
use botboard_core::TrigramEmbedder;
use botboard_server::{BackgroundServer, Store};
use thiserror::Error;

use crate::config::{BackendConfig, ExperimentConfig};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend rejected the request: {status} {body}")]
    Rejected { status: u16, body: String },
    #[error("a nonempty phase must inherit the empty phase's team")]
    MissingParent,
}

pub struct BackendHandle {
    url: String,
    admin_key: String,
    agent: ureq::Agent,
    /// Kept alive for the handle's lifetime when embedded.
    _server: Option<BackgroundServer>,
}

impl BackendHandle {
    /// Starts the embedded server or checks that the remote one answers.
    pub fn connect(config: &ExperimentConfig) -> Result<Self, BackendError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        let this = match &config.backend {
            BackendConfig::Embedded { .. } => {
                let db = config.db_path();
                if let Some(parent) = db.parent() {
                    std::fs::create_dir_all(parent).map_err(|e| BackendError::BackendUnavailable(e.to_string()))?;
                }
                let store = Store::open(&db, Arc::new(TrigramEmbedder::default()))
                    .map_err(|e| BackendError::BackendUnavailable(format!("{}: {e}", db.display())))?;
                let admin_key = uuid::Uuid::new_v4().simple().to_string();
                let server = BackgroundServer::start(Arc::new(store), Some(admin_key.clone()))
                    .map_err(|e| BackendError::BackendUnavailable(e.to_string()))?;
                Self {
                    url: server.url(),
                    admin_key,
                    agent,
                    _server: Some(server),
                }
            }
            BackendConfig::Remote { url, admin_key } => Self {
                url: url.trim_end_matches('/').to_string(),
                admin_key: admin_key.clone(),
                agent,
                _server: None,
            },
        };
        this.health()?;
        Ok(this)
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn health(&self) -> Result<(), BackendError> {
        let resp = self
            .agent
            .get(format!("{}/health", self.url))
            .call()
            .map_err(|e| BackendError::BackendUnavailable(e.to_string()))?;
        check(resp).map(drop)
    }

    /// Empty phase (and remediation) → a fresh team. Nonempty → the parent
    /// team, unchanged. Baseline → no team.
    pub fn provision_team(
        &self,
        variant: Variant,
        phase: Phase,
        inherit_from: Option<&TeamCredentials>,
    ) -> Result<Option<TeamCredentials>, BackendError> {
        match (variant, phase) {
            (Variant::Baseline, _) | (_, Phase::None) => Ok(None),
            (_, Phase::Nonempty) => inherit_from.cloned().map(Some).ok_or(BackendError::MissingParent),
            (_, Phase::Empty) => self.fresh_team().map(Some),
        }
    }

    pub fn fresh_team(&self) -> Result<TeamCredentials, BackendError> {
        let resp = self
            .agent
            .post(format!("{}/api/v1/admin/teams", self.url))
            .header(ADMIN_KEY_HEADER, &self.admin_key)
            .header("Content-Type", "application/json")
            .send("{}")
            .map_err(|e| BackendError::BackendUnavailable(e.to_string()))?;
        let body = check(resp)?;
        serde_json::from_str(&body)
            .map_err(|e| BackendError::BackendUnavailable(format!("bad provisioning reply: {e}")))
    }

    /// The team's store exactly as the server serializes it.
    pub fn export(&self, team_key: &str) -> Result<Vec<u8>, BackendError> {
        let resp = self
            .agent
            .get(format!("{}/api/v1/export", self.url))
            .header(TEAM_KEY_HEADER, team_key)
            .call()
            .map_err(|e| BackendError::BackendUnavailable(e.to_string()))?;
        check(resp).map(String::into_bytes)
    }
}

fn check(mut resp: ureq::http::Response<ureq::Body>) -> Result<String, BackendError> {
    let status = resp.status().as_u16();
    let body = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| BackendError::BackendUnavailable(e.to_string()))?;
    if (200..300).contains(&status) {
        Ok(body)
    } else {
        Err(BackendError::Rejected { status, body })
    }
}

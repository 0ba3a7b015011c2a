//! Durable, append-only, team-partitioned store.
//!
//! Every acknowledged write is committed to SQLite (WAL, `synchronous=FULL`)
//! before the call returns. Reads never touch the database: each team keeps
//! an immutable in-memory snapshot that writers replace atomically after the
//! commit, so readers always see a consistent view without blocking.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use arc_swap::ArcSwap;
use botboard_core::embedding::EmbeddingProvider;
use botboard_core::model::{
    entry_text, normalize_sections, normalize_tag, normalize_tags, snippet, validate_agent_name, validate_post_body,
    EmbeddingVector, JournalEntry, ModelError, Post, SearchHit, TeamId,
};
use botboard_core::search::{self, IndexedEntry, SearchError, VectorIndex, SNIPPET_CHARS};
use botboard_core::time::{from_unix_micros, now_micros};
use botboard_core::wire::{TeamCredentials, TeamExport};
use chrono::{DateTime, Duration, Utc};
use rusqlite::{params, Connection, OptionalExtension};
use thiserror::Error;
use uuid::Uuid;

pub const DEFAULT_POST_LIMIT: usize = 20;
pub const DEFAULT_SEARCH_LIMIT: usize = 5;
pub const DEFAULT_RECENT_LIMIT: usize = 10;
pub const MAX_LIMIT: usize = 500;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown or missing team key")]
    Unauthorized,
    #[error(transparent)]
    Validation(#[from] ModelError),
    #[error("not found")]
    NotFound,
    #[error("search query is empty")]
    EmptyQuery,
    #[error("limit must be at least 1")]
    InvalidLimit,
    #[error("team {0} already exists")]
    TeamExists(TeamId),
    #[error("api key is already assigned to another team")]
    KeyInUse,
    #[error("store was created with embedding provider {stored}, not {configured}")]
    ProviderMismatch { stored: String, configured: String },
    #[error("corrupt row: {0}")]
    Corrupt(String),
    #[error("database error: {0}")]
    Database(#[from] rusqlite::Error),
}

impl From<SearchError> for StoreError {
    fn from(err: SearchError) -> Self {
        match err {
            SearchError::EmptyQuery => StoreError::EmptyQuery,
            SearchError::InvalidLimit => StoreError::InvalidLimit,
            other => StoreError::Corrupt(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, StoreError>;

/// Immutable view of one team's data.
#[derive(Debug, Clone)]
pub struct TeamSnapshot {
    pub team: TeamId,
    /// Ascending by (created_at, id).
    pub posts: Vec<Arc<Post>>,
    /// Ascending by (created_at, id).
    pub journal: Vec<Arc<JournalEntry>>,
    journal_by_id: HashMap<String, usize>,
    pub index: VectorIndex,
}

impl TeamSnapshot {
    fn empty(team: TeamId, dimension: usize) -> Self {
        Self {
            index: VectorIndex::new(team.clone(), dimension),
            team,
            posts: Vec::new(),
            journal: Vec::new(),
            journal_by_id: HashMap::new(),
        }
    }

    fn push_journal(&mut self, entry: JournalEntry) -> Result<()> {
        self.index.insert(IndexedEntry {
            entry_id: entry.id.clone(),
            created_at: entry.created_at,
            snippet: snippet(&entry.text(), SNIPPET_CHARS),
            vector: entry.embedding.clone(),
        })?;
        self.journal_by_id.insert(entry.id.clone(), self.journal.len());
        self.journal.push(Arc::new(entry));
        Ok(())
    }

    pub fn entry(&self, id: &str) -> Option<&JournalEntry> {
        self.journal_by_id.get(id).map(|i| self.journal[*i].as_ref())
    }
}

struct TeamCell {
    write: Mutex<()>,
    snapshot: ArcSwap<TeamSnapshot>,
}

struct Db {
    conn: Connection,
    last_ts: Option<DateTime<Utc>>,
    last_post_id: u64,
}

impl Db {
    /// Strictly increasing across the whole store so feeds never tie.
    fn next_timestamp(&mut self) -> DateTime<Utc> {
        let now = now_micros();
        let ts = match self.last_ts {
            Some(last) if now <= last => last + Duration::microseconds(1),
            _ => now,
        };
        self.last_ts = Some(ts);
        ts
    }
}

pub struct Store {
    db: Mutex<Db>,
    provider: Arc<dyn EmbeddingProvider>,
    teams: RwLock<HashMap<TeamId, Arc<TeamCell>>>,
    keys: RwLock<HashMap<String, TeamId>>,
}

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS teams (
    team_id TEXT PRIMARY KEY,
    api_key TEXT NOT NULL UNIQUE,
    created_us INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS posts (
    seq INTEGER PRIMARY KEY,
    team_id TEXT NOT NULL REFERENCES teams(team_id),
    author TEXT NOT NULL,
    body TEXT NOT NULL,
    tags TEXT NOT NULL,
    created_us INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS journal (
    rowid INTEGER PRIMARY KEY,
    id TEXT NOT NULL UNIQUE,
    team_id TEXT NOT NULL REFERENCES teams(team_id),
    sections TEXT NOT NULL,
    created_us INTEGER NOT NULL,
    embedding BLOB NOT NULL
);
";

impl Store {
    pub fn open(path: impl AsRef<Path>, provider: Arc<dyn EmbeddingProvider>) -> Result<Self> {
        Self::from_connection(Connection::open(path)?, provider)
    }

    pub fn open_in_memory(provider: Arc<dyn EmbeddingProvider>) -> Result<Self> {
        Self::from_connection(Connection::open_in_memory()?, provider)
    }

    fn from_connection(conn: Connection, provider: Arc<dyn EmbeddingProvider>) -> Result<Self> {
        conn.pragma_update(None, "journal_mode", "WAL")?;
        conn.pragma_update(None, "synchronous", "FULL")?;
        conn.pragma_update(None, "foreign_keys", "ON")?;
        conn.execute_batch(SCHEMA)?;
        check_provider(&conn, provider.as_ref())?;

        let dimension = provider.dimension();
        let mut teams: HashMap<TeamId, TeamSnapshot> = HashMap::new();
        let mut keys = HashMap::new();
        {
            let mut stmt = conn.prepare("SELECT team_id, api_key FROM teams")?;
            let rows = stmt.query_map([], |r| Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?)))?;
            for row in rows {
                let (team_id, key) = row?;
                let team = TeamId::new(team_id)?;
                keys.insert(key, team.clone());
                teams.insert(team.clone(), TeamSnapshot::empty(team, dimension));
            }
        }

        let mut last_ts: Option<DateTime<Utc>> = None;
        let mut bump = |ts: DateTime<Utc>| {
            if last_ts.is_none_or(|l| ts > l) {
                last_ts = Some(ts);
            }
        };

        let mut last_post_id = 0u64;
        {
            let mut stmt = conn
                .prepare("SELECT seq, team_id, author, body, tags, created_us FROM posts ORDER BY created_us, seq")?;
            let mut rows = stmt.query([])?;
            while let Some(r) = rows.next()? {
                let seq: i64 = r.get(0)?;
                let team = TeamId::new(r.get::<_, String>(1)?)?;
                let tags: Vec<String> = serde_json::from_str(&r.get::<_, String>(4)?)
                    .map_err(|e| StoreError::Corrupt(format!("post {seq} tags: {e}")))?;
                let created_at = timestamp(r.get(5)?)?;
                bump(created_at);
                last_post_id = last_post_id.max(seq as u64);
                let snap = teams
                    .get_mut(&team)
                    .ok_or_else(|| StoreError::Corrupt(format!("post {seq} has unknown team")))?;
                snap.posts.push(Arc::new(Post {
                    id: seq.to_string(),
                    team,
                    author: r.get(2)?,
                    body: r.get(3)?,
                    tags,
                    created_at,
                }));
            }
        }
        {
            let mut stmt = conn
                .prepare("SELECT id, team_id, sections, created_us, embedding FROM journal ORDER BY created_us, id")?;
            let mut rows = stmt.query([])?;
            while let Some(r) = rows.next()? {
                let id: String = r.get(0)?;
                let team = TeamId::new(r.get::<_, String>(1)?)?;
                let sections: BTreeMap<String, String> = serde_json::from_str(&r.get::<_, String>(2)?)
                    .map_err(|e| StoreError::Corrupt(format!("entry {id} sections: {e}")))?;
                let created_at = timestamp(r.get(3)?)?;
                bump(created_at);
                let embedding = EmbeddingVector::from_le_bytes(&r.get::<_, Vec<u8>>(4)?, dimension)?;
                let snap = teams
                    .get_mut(&team)
                    .ok_or_else(|| StoreError::Corrupt(format!("entry {id} has unknown team")))?;
                snap.push_journal(JournalEntry {
                    id,
                    team,
                    sections,
                    created_at,
                    embedding,
                })?;
            }
        }

        let teams = teams
            .into_iter()
            .map(|(team, snap)| {
                let cell = TeamCell {
                    write: Mutex::new(()),
                    snapshot: ArcSwap::from_pointee(snap),
                };
                (team, Arc::new(cell))
            })
            .collect();

        Ok(Self {
            db: Mutex::new(Db {
                conn,
                last_ts,
                last_post_id,
            }),
            provider,
            teams: RwLock::new(teams),
            keys: RwLock::new(keys),
        })
    }

    pub fn provider(&self) -> &dyn EmbeddingProvider {
        self.provider.as_ref()
    }

    /// Registers `team` under `key`. Re-registering the same pair is a no-op.
    pub fn register_team(&self, team: &TeamId, key: &str) -> Result<()> {
        if key.is_empty() {
            return Err(StoreError::KeyInUse);
        }
        let mut teams = self.teams.write().unwrap();
        let mut keys = self.keys.write().unwrap();
        match keys.get(key) {
            Some(existing) if existing == team => return Ok(()),
            Some(_) => return Err(StoreError::KeyInUse),
            None => {}
        }
        if teams.contains_key(team) {
            return Err(StoreError::TeamExists(team.clone()));
        }
        {
            let mut db = self.db.lock().unwrap();
            let created = db.next_timestamp();
            db.conn.execute(
                "INSERT INTO teams (team_id, api_key, created_us) VALUES (?1, ?2, ?3)",
                params![team.as_str(), key, created.timestamp_micros()],
            )?;
        }
        keys.insert(key.to_string(), team.clone());
        teams.insert(
            team.clone(),
            Arc::new(TeamCell {
                write: Mutex::new(()),
                snapshot: ArcSwap::from_pointee(TeamSnapshot::empty(team.clone(), self.provider.dimension())),
            }),
        );
        Ok(())
    }

    /// Creates a fresh, empty team with a random key.
    pub fn provision_team(&self, requested: Option<TeamId>) -> Result<TeamCredentials> {
        let team = match requested {
            Some(team) => team,
            None => TeamId::new(format!("team-{}", Uuid::new_v4().simple()))?,
        };
        let key = Uuid::new_v4().simple().to_string();
        self.register_team(&team, &key)?;
        Ok(TeamCredentials { team_id: team, key })
    }

    pub fn authenticate(&self, key: &str) -> Result<TeamId> {
        self.keys
            .read()
            .unwrap()
            .get(key)
            .cloned()
            .ok_or(StoreError::Unauthorized)
    }

    pub fn team_ids(&self) -> Vec<TeamId> {
        let mut ids: Vec<_> = self.teams.read().unwrap().keys().cloned().collect();
        ids.sort();
        ids
    }

    fn cell(&self, team: &TeamId) -> Result<Arc<TeamCell>> {
        self.teams
            .read()
            .unwrap()
            .get(team)
            .cloned()
            .ok_or(StoreError::Unauthorized)
    }

    pub fn snapshot(&self, team: &TeamId) -> Result<Arc<TeamSnapshot>> {
        Ok(self.cell(team)?.snapshot.load_full())
    }

    pub fn create_post<S: AsRef<str>>(&self, team: &TeamId, author: &str, body: &str, tags: &[S]) -> Result<Post> {
        let author = validate_agent_name(author)?;
        validate_post_body(body)?;
        let tags = normalize_tags(tags)?;
        let tags_json = serde_json::to_string(&tags).expect("string list serializes");

        let cell = self.cell(team)?;
        let _write = cell.write.lock().unwrap();
        let post = {
            let mut db = self.db.lock().unwrap();
            let id = db.last_post_id + 1;
            let created_at = db.next_timestamp();
            db.conn.execute(
                "INSERT INTO posts (seq, team_id, author, body, tags, created_us) VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
                params![
                    id as i64,
                    team.as_str(),
                    author,
                    body,
                    tags_json,
                    created_at.timestamp_micros()
                ],
            )?;
            db.last_post_id = id;
            Post {
                id: id.to_string(),
                team: team.clone(),
                author,
                body: body.to_string(),
                tags,
                created_at,
            }
        };
        let mut next = TeamSnapshot::clone(&cell.snapshot.load());
        next.posts.push(Arc::new(post.clone()));
        cell.snapshot.store(Arc::new(next));
        Ok(post)
    }

    /// Newest first; `tag` is normalized before matching.
    pub fn list_posts(&self, team: &TeamId, tag: Option<&str>, limit: usize) -> Result<Vec<Post>> {
        check_limit(limit)?;
        let tag = tag.map(normalize_tag).transpose()?;
        let snap = self.snapshot(team)?;
        Ok(snap
            .posts
            .iter()
            .rev()
            .filter(|p| tag.as_deref().is_none_or(|t| p.has_tag(t)))
            .take(limit.min(MAX_LIMIT))
            .map(|p| Post::clone(p))
            .collect())
    }

    pub fn create_journal_entry(&self, team: &TeamId, sections: &BTreeMap<String, String>) -> Result<JournalEntry> {
        let sections = normalize_sections(sections)?;
        let embedding = self
            .provider
            .embed(&entry_text(&sections))
            .map_err(|_| StoreError::Validation(ModelError::EmptyEntry))?;
        let sections_json = serde_json::to_string(&sections).expect("string map serializes");
        let id = Uuid::new_v4().to_string();

        let cell = self.cell(team)?;
        let _write = cell.write.lock().unwrap();
        let created_at = {
            let mut db = self.db.lock().unwrap();
            let created_at = db.next_timestamp();
            db.conn.execute(
                "INSERT INTO journal (id, team_id, sections, created_us, embedding) VALUES (?1, ?2, ?3, ?4, ?5)",
                params![
                    id,
                    team.as_str(),
                    sections_json,
                    created_at.timestamp_micros(),
                    embedding.to_le_bytes()
                ],
            )?;
            created_at
        };
        let entry = JournalEntry {
            id,
            team: team.clone(),
            sections,
            created_at,
            embedding,
        };
        let mut next = TeamSnapshot::clone(&cell.snapshot.load());
        next.push_journal(entry.clone())?;
        cell.snapshot.store(Arc::new(next));
        Ok(entry)
    }

    pub fn search_journal(&self, team: &TeamId, query: &str, limit: usize) -> Result<Vec<SearchHit>> {
        let snap = self.snapshot(team)?;
        Ok(search::search(
            &snap.index,
            self.provider.as_ref(),
            query,
            limit.min(MAX_LIMIT),
        )?)
    }

    /// Unknown ids and other teams' ids are indistinguishable.
    pub fn read_entry(&self, team: &TeamId, id: &str) -> Result<JournalEntry> {
        let snap = self.snapshot(team)?;
        snap.entry(id).cloned().ok_or(StoreError::NotFound)
    }

    pub fn list_recent(&self, team: &TeamId, limit: usize) -> Result<Vec<JournalEntry>> {
        check_limit(limit)?;
        let snap = self.snapshot(team)?;
        Ok(snap
            .journal
            .iter()
            .rev()
            .take(limit.min(MAX_LIMIT))
            .map(|e| JournalEntry::clone(e))
            .collect())
    }

    pub fn export(&self, team: &TeamId) -> Result<TeamExport> {
        let snap = self.snapshot(team)?;
        Ok(TeamExport {
            team: team.clone(),
            posts: snap.posts.iter().map(|p| Post::clone(p)).collect(),
            journal: snap.journal.iter().map(|e| JournalEntry::clone(e)).collect(),
        })
    }
}

fn check_limit(limit: usize) -> Result<()> {
    if limit == 0 {
        return Err(StoreError::InvalidLimit);
    }
    Ok(())
}

fn timestamp(micros: i64) -> Result<DateTime<Utc>> {
    from_unix_micros(micros).ok_or_else(|| StoreError::Corrupt(format!("timestamp {micros}")))
}

fn check_provider(conn: &Connection, provider: &dyn EmbeddingProvider) -> Result<()> {
    let configured = format!("{}/{}", provider.name(), provider.dimension());
    let stored: Option<String> = conn
        .query_row("SELECT value FROM meta WHERE key = 'embedding_provider'", [], |r| {
            r.get(0)
        })
        .optional()?;
    match stored {
        Some(stored) if stored != configured => Err(StoreError::ProviderMismatch { stored, configured }),
        Some(_) => Ok(()),
        None => {
            conn.execute(
                "INSERT INTO meta (key, value) VALUES ('embedding_provider', ?1)",
                params![configured],
            )?;
            Ok(())
        }
    }
}

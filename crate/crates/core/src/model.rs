use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time;

pub const MAX_TEAM_ID_LEN: usize = 128;
pub const MAX_AGENT_NAME_LEN: usize = 64;
pub const MAX_TAG_LEN: usize = 64;
pub const MAX_POST_CHARS: usize = 10_000;
pub const MAX_CATEGORY_LEN: usize = 64;

pub const TECHNICAL_INSIGHTS: &str = "technical-insights";
pub const DEBUGGING_NOTES: &str = "debugging-notes";
pub const REFLECTIVE_OBSERVATIONS: &str = "reflective-observations";

/// Section categories that sort ahead of everything else when an entry's
/// text is assembled.
pub const CANONICAL_SECTIONS: [&str; 3] = [TECHNICAL_INSIGHTS, DEBUGGING_NOTES, REFLECTIVE_OBSERVATIONS];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("tag is empty after normalization")]
    EmptyTag,
    #[error("tag {0:?} contains characters outside [a-z0-9-] or is too long")]
    InvalidTag(String),
    #[error("invalid team id {0:?}")]
    InvalidTeamId(String),
    #[error("agent name must be 1..={MAX_AGENT_NAME_LEN} characters")]
    InvalidAgentName,
    #[error("post body must not be empty")]
    EmptyBody,
    #[error("post body exceeds {MAX_POST_CHARS} characters")]
    BodyTooLong,
    #[error("journal entry needs at least one non-empty section")]
    EmptyEntry,
    #[error("invalid section category {0:?}")]
    InvalidCategory(String),
    #[error("embedding has dimension {actual}, expected {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("embedding contains a non-finite value")]
    NonFiniteEmbedding,
}

/// Isolation domain for every stored row.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TeamId(String);

impl TeamId {
    pub fn new(raw: impl Into<String>) -> Result<Self, ModelError> {
        let raw = raw.into();
        let url_safe = raw
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.' | '~'));
        if raw.is_empty() || raw.len() > MAX_TEAM_ID_LEN || !url_safe {
            return Err(ModelError::InvalidTeamId(raw));
        }
        Ok(Self(raw))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for TeamId {
    type Error = ModelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<TeamId> for String {
    fn from(value: TeamId) -> Self {
        value.0
    }
}

impl fmt::Display for TeamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentIdentity {
    pub team: TeamId,
    pub agent_name: String,
}

impl AgentIdentity {
    pub fn new(team: TeamId, agent_name: impl Into<String>) -> Result<Self, ModelError> {
        let agent_name = validate_agent_name(&agent_name.into())?;
        Ok(Self { team, agent_name })
    }
}

pub fn validate_agent_name(raw: &str) -> Result<String, ModelError> {
    let name = raw.trim();
    let len = name.chars().count();
    if len == 0 || len > MAX_AGENT_NAME_LEN {
        return Err(ModelError::InvalidAgentName);
    }
    Ok(name.to_string())
}

/// Lowercases, trims and joins internal whitespace runs with `-`.
///
/// The result is restricted to `[a-z0-9-]`; anything else is rejected rather
/// than silently stripped so that a filter never matches a different tag
/// than the one the caller typed.
pub fn normalize_tag(raw: &str) -> Result<String, ModelError> {
    let tag = raw
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("-");
    if tag.is_empty() {
        return Err(ModelError::EmptyTag);
    }
    let allowed = tag
        .chars()
        .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-');
    if !allowed || tag.len() > MAX_TAG_LEN {
        return Err(ModelError::InvalidTag(tag));
    }
    Ok(tag)
}

/// Normalizes a tag list, keeping the first occurrence of each tag.
pub fn normalize_tags<S: AsRef<str>>(raw: &[S]) -> Result<Vec<String>, ModelError> {
    let mut seen = HashSet::new();
    let mut tags = Vec::with_capacity(raw.len());
    for tag in raw {
        let tag = normalize_tag(tag.as_ref())?;
        if seen.insert(tag.clone()) {
            tags.push(tag);
        }
    }
    Ok(tags)
}

pub fn validate_post_body(body: &str) -> Result<(), ModelError> {
    if body.trim().is_empty() {
        return Err(ModelError::EmptyBody);
    }
    if body.chars().count() > MAX_POST_CHARS {
        return Err(ModelError::BodyTooLong);
    }
    Ok(())
}

/// Trims category names and drops blank sections. Fails when nothing is left.
pub fn normalize_sections(sections: &BTreeMap<String, String>) -> Result<BTreeMap<String, String>, ModelError> {
    let mut out = BTreeMap::new();
    for (category, text) in sections {
        let category = category.trim();
        if category.is_empty() || category.chars().count() > MAX_CATEGORY_LEN {
            return Err(ModelError::InvalidCategory(category.to_string()));
        }
        if text.trim().is_empty() {
            continue;
        }
        out.entry(category.to_string())
            .and_modify(|existing: &mut String| {
                existing.push_str("\n\n");
                existing.push_str(text);
            })
            .or_insert_with(|| text.clone());
    }
    if out.is_empty() {
        return Err(ModelError::EmptyEntry);
    }
    Ok(out)
}

/// Sections in embedding order: the three canonical categories first, then
/// the rest lexicographically.
pub fn ordered_sections(sections: &BTreeMap<String, String>) -> Vec<(&str, &str)> {
    let mut ordered: Vec<(&str, &str)> = CANONICAL_SECTIONS
        .iter()
        .filter_map(|c| sections.get_key_value(*c))
        .map(|(k, v)| (k.as_str(), v.as_str()))
        .collect();
    ordered.extend(
        sections
            .iter()
            .filter(|(k, _)| !CANONICAL_SECTIONS.contains(&k.as_str()))
            .map(|(k, v)| (k.as_str(), v.as_str())),
    );
    ordered
}

/// Concatenated section text that gets embedded and snippeted.
pub fn entry_text(sections: &BTreeMap<String, String>) -> String {
    ordered_sections(sections)
        .into_iter()
        .map(|(_, text)| text)
        .filter(|text| !text.trim().is_empty())
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// First `max_chars` characters of `text`.
pub fn snippet(text: &str, max_chars: usize) -> String {
    text.chars().take(max_chars).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub team: TeamId,
    pub author: String,
    pub body: String,
    pub tags: Vec<String>,
    #[serde(with = "time::micros")]
    pub created_at: DateTime<Utc>,
}

impl Post {
    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f32>", into = "Vec<f32>")]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>, dimension: usize) -> Result<Self, ModelError> {
        if values.len() != dimension {
            return Err(ModelError::DimensionMismatch {
                expected: dimension,
                actual: values.len(),
            });
        }
        Self::try_from(values)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|v| f64::from(*v).powi(2)).sum::<f64>().sqrt()
    }

    /// Little-endian f32 bytes, the on-disk representation.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.0.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_le_bytes(bytes: &[u8], dimension: usize) -> Result<Self, ModelError> {
        if bytes.len() != dimension * 4 {
            return Err(ModelError::DimensionMismatch {
                expected: dimension,
                actual: bytes.len() / 4,
            });
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(values, dimension)
    }
}

impl TryFrom<Vec<f32>> for EmbeddingVector {
    type Error = ModelError;

    fn try_from(values: Vec<f32>) -> Result<Self, Self::Error> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteEmbedding);
        }
        Ok(Self(values))
    }
}

impl From<EmbeddingVector> for Vec<f32> {
    fn from(value: EmbeddingVector) -> Self {
        value.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub id: String,
    pub team: TeamId,
    pub sections: BTreeMap<String, String>,
    #[serde(with = "time::micros")]
    pub created_at: DateTime<Utc>,
    pub embedding: EmbeddingVector,
}

impl JournalEntry {
    pub fn text(&self) -> String {
        entry_text(&self.sections)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub entry_id: String,
    pub score: f64,
    pub snippet: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Baseline,
    Journal,
    Social,
    JournalSocial,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Baseline,
        Variant::Journal,
        Variant::Social,
        Variant::JournalSocial,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Journal => "journal",
            Variant::Social => "social",
            Variant::JournalSocial => "journal-social",
        }
    }

    pub fn has_journal(self) -> bool {
        matches!(self, Variant::Journal | Variant::JournalSocial)
    }

    pub fn has_social(self) -> bool {
        matches!(self, Variant::Social | Variant::JournalSocial)
    }

    pub fn uses_tools(self) -> bool {
        self != Variant::Baseline
    }

    /// Phases this variant is run under.
    pub fn phases(self) -> &'static [Phase] {
        if self.uses_tools() {
            &[Phase::Empty, Phase::Nonempty]
        } else {
            &[Phase::None]
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    None,
    Empty,
    Nonempty,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::None => "none",
            Phase::Empty => "empty",
            Phase::Nonempty => "nonempty",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Phase::None),
            "empty" => Ok(Phase::Empty),
            "nonempty" => Ok(Phase::Nonempty),
            _ => Err(format!("unknown phase {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCounts {
    pub input: u64,
    pub output: u64,
    pub cache_create: u64,
    pub cache_read: u64,
    pub total: u64,
}

impl TokenCounts {
    pub fn new(input: u64, output: u64, cache_create: u64, cache_read: u64) -> Self {
        Self {
            input,
            output,
            cache_create,
            cache_read,
            total: input + output + cache_create + cache_read,
        }
    }

    pub fn parts_sum(&self) -> u64 {
        self.input + self.output + self.cache_create + self.cache_read
    }
}

impl std::ops::Add for TokenCounts {
    type Output = TokenCounts;

    fn add(self, rhs: Self) -> Self::Output {
        TokenCounts::new(
            self.input + rhs.input,
            self.output + rhs.output,
            self.cache_create + rhs.cache_create,
            self.cache_read + rhs.cache_read,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToolKind {
    Journal,
    Social,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToolAction {
    Write,
    Read,
    Search,
    Login,
}

impl ToolAction {
    pub fn for_tool_name(name: &str) -> Option<(ToolKind, ToolAction)> {
        Some(match name {
            "login" => (ToolKind::Social, ToolAction::Login),
            "read_posts" => (ToolKind::Social, ToolAction::Read),
            "create_post" => (ToolKind::Social, ToolAction::Write),
            "process_thoughts" => (ToolKind::Journal, ToolAction::Write),
            "search_journal" => (ToolKind::Journal, ToolAction::Search),
            "read_entry" | "list_recent" => (ToolKind::Journal, ToolAction::Read),
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolEvent {
    #[serde(with = "time::micros")]
    pub timestamp: DateTime<Utc>,
    pub tool: ToolKind,
    pub action: ToolAction,
    pub after_completion: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    InfraFailure,
}

/// Telemetry for one problem attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub problem_id: String,
    pub model_label: String,
    pub variant: Variant,
    pub phase: Phase,
    /// 1-based repetition index within the experiment.
    pub repetition: u32,
    /// 0 for the first execution, incremented by each remediation re-run.
    #[serde(default)]
    pub attempt: u32,
    pub cost_usd: f64,
    pub turns: u32,
    pub wall_time_s: f64,
    pub tokens: TokenCounts,
    pub tests_passed: u32,
    pub tests_total: u32,
    pub completed: bool,
    pub tool_events: Vec<ToolEvent>,
    pub status: RunStatus,
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }
}

/// One broken invariant found by [`validate_run_record`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Violation {
    BaselineWithPhase,
    ToolVariantWithoutPhase,
    PassedExceedsTotal,
    CompletedMismatch,
    TokenTotalMismatch,
    InvalidCost,
    InvalidWallTime,
    ToolEventsOutOfOrder,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Violation::BaselineWithPhase => "baseline must have phase none",
            Violation::ToolVariantWithoutPhase => "tool variant must have phase empty or nonempty",
            Violation::PassedExceedsTotal => "passed exceeds total",
            Violation::CompletedMismatch => "completed must equal tests_passed == tests_total",
            Violation::TokenTotalMismatch => "token total must equal the sum of its parts",
            Violation::InvalidCost => "cost must be finite and nonnegative",
            Violation::InvalidWallTime => "wall time must be finite and nonnegative",
            Violation::ToolEventsOutOfOrder => "tool events must be ordered by timestamp",
        })
    }
}

/// Every invariant violation in `record`; an empty list means valid.
pub fn validate_run_record(record: &RunRecord) -> Vec<Violation> {
    let mut violations = Vec::new();
    match (record.variant, record.phase) {
        (Variant::Baseline, Phase::None) => {}
        (Variant::Baseline, _) => violations.push(Violation::BaselineWithPhase),
        (_, Phase::None) => violations.push(Violation::ToolVariantWithoutPhase),
        _ => {}
    }
    if record.tests_passed > record.tests_total {
        violations.push(Violation::PassedExceedsTotal);
    }
    if record.completed != (record.tests_passed == record.tests_total) {
        violations.push(Violation::CompletedMismatch);
    }
    if record.tokens.total != record.tokens.parts_sum() {
        violations.push(Violation::TokenTotalMismatch);
    }
    if !record.cost_usd.is_finite() || record.cost_usd < 0.0 {
        violations.push(Violation::InvalidCost);
    }
    if !record.wall_time_s.is_finite() || record.wall_time_s < 0.0 {
        violations.push(Violation::InvalidWallTime);
    }
    if record.tool_events.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
        violations.push(Violation::ToolEventsOutOfOrder);
    }
    violations
}

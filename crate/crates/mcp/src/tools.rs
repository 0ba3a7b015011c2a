//! Tool surfaces, argument checking, and text rendering of backend results.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use botboard_core::model::{
    ordered_sections, snippet, validate_agent_name, Post, DEBUGGING_NOTES, REFLECTIVE_OBSERVATIONS, TECHNICAL_INSIGHTS,
};
use botboard_core::time::format_micros;
use botboard_core::wire::{round_score, JournalEntryView, JournalList, PostList, SearchResponse};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::backend::{Backend, BackendError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Social,
    Journal,
    Combined,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Social => "social",
            Mode::Journal => "journal",
            Mode::Combined => "combined",
        }
    }

    pub fn tools(self) -> Vec<&'static ToolSpec> {
        let social = SOCIAL_TOOLS.iter();
        let journal = JOURNAL_TOOLS.iter();
        match self {
            Mode::Social => social.collect(),
            Mode::Journal => journal.collect(),
            Mode::Combined => social.chain(journal).collect(),
        }
    }

    pub fn tool(self, name: &str) -> Option<&'static ToolSpec> {
        self.tools().into_iter().find(|t| t.name == name)
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "social" => Ok(Mode::Social),
            "journal" => Ok(Mode::Journal),
            "combined" => Ok(Mode::Combined),
            other => Err(format!("unknown mode {other:?}; expected social, journal, or combined")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Str,
    /// Integer in `[min, max]`.
    Int {
        min: i64,
        max: i64,
    },
    StrList,
}

#[derive(Debug, Clone, Copy)]
pub struct Param {
    pub name: &'static str,
    pub kind: ParamKind,
    pub required: bool,
    pub description: &'static str,
}

#[derive(Debug)]
pub struct ToolSpec {
    pub name: &'static str,
    pub description: &'static str,
    pub params: &'static [Param],
    /// At least one argument must be present.
    pub min_properties: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolDescriptor {
    pub name: String,
    pub description: String,
    #[serde(rename = "inputSchema")]
    pub input_schema: Value,
}

const LIMIT: ParamKind = ParamKind::Int { min: 1, max: 500 };

pub static SOCIAL_TOOLS: [ToolSpec; 3] = [
    ToolSpec {
        name: "login",
        description: "Log in to the team's social feed under an agent name. Required before posting.",
        params: &[Param {
            name: "agent_name",
            kind: ParamKind::Str,
            required: true,
            description: "Name to post under",
        }],
        min_properties: 0,
    },
    ToolSpec {
        name: "read_posts",
        description: "Read recent posts from teammates, newest first, optionally filtered by tag.",
        params: &[
            Param {
                name: "tag",
                kind: ParamKind::Str,
                required: false,
                description: "Only posts carrying this tag",
            },
            Param {
                name: "limit",
                kind: LIMIT,
                required: false,
                description: "Maximum number of posts (default 20)",
            },
        ],
        min_properties: 0,
    },
    ToolSpec {
        name: "create_post",
        description: "Share a post with the team. Requires login.",
        params: &[
            Param {
                name: "body",
                kind: ParamKind::Str,
                required: true,
                description: "Post text",
            },
            Param {
                name: "tags",
                kind: ParamKind::StrList,
                required: false,
                description: "Lowercase tags such as the problem name",
            },
        ],
        min_properties: 0,
    },
];

pub static JOURNAL_TOOLS: [ToolSpec; 4] = [
    ToolSpec {
        name: "process_thoughts",
        description: "Write a private journal entry with one or more sections.",
        params: &[
            Param {
                name: "technical_insights",
                kind: ParamKind::Str,
                required: false,
                description: "What you learned about the code or problem",
            },
            Param {
                name: "debugging_notes",
                kind: ParamKind::Str,
                required: false,
                description: "Failures, causes, and fixes",
            },
            Param {
                name: "reflective_observations",
                kind: ParamKind::Str,
                required: false,
                description: "Reflections on approach and process",
            },
            Param {
                name: "notes",
                kind: ParamKind::Str,
                required: false,
                description: "Anything else; stored with reflective observations",
            },
        ],
        min_properties: 1,
    },
    ToolSpec {
        name: "search_journal",
        description: "Semantic search over past journal entries. Returns the most similar entries with scores.",
        params: &[
            Param {
                name: "query",
                kind: ParamKind::Str,
                required: true,
                description: "What to look for",
            },
            Param {
                name: "limit",
                kind: LIMIT,
                required: false,
                description: "Maximum number of hits (default 5)",
            },
        ],
        min_properties: 0,
    },
    ToolSpec {
        name: "read_entry",
        description: "Read the full text of one journal entry.",
        params: &[Param {
            name: "entry_id",
            kind: ParamKind::Str,
            required: true,
            description: "Entry id from search_journal or list_recent",
        }],
        min_properties: 0,
    },
    ToolSpec {
        name: "list_recent",
        description: "List the most recent journal entries, newest first.",
        params: &[Param {
            name: "limit",
            kind: LIMIT,
            required: false,
            description: "Maximum number of entries (default 10)",
        }],
        min_properties: 0,
    },
];

impl ToolSpec {
    pub fn descriptor(&self) -> ToolDescriptor {
        let mut properties = Map::new();
        for p in self.params {
            let schema = match p.kind {
                ParamKind::Str => json!({"type": "string", "description": p.description}),
                ParamKind::Int { min, max } => {
                    json!({"type": "integer", "minimum": min, "maximum": max, "description": p.description})
                }
                ParamKind::StrList => {
                    json!({"type": "array", "items": {"type": "string"}, "description": p.description})
                }
            };
            properties.insert(p.name.to_string(), schema);
        }
        let required: Vec<&str> = self.params.iter().filter(|p| p.required).map(|p| p.name).collect();
        let mut schema = json!({
            "type": "object",
            "properties": properties,
            "required": required,
            "additionalProperties": false,
        });
        if self.min_properties > 0 {
            schema["minProperties"] = json!(self.min_properties);
        }
        ToolDescriptor {
            name: self.name.to_string(),
            description: self.description.to_string(),
            input_schema: schema,
        }
    }

    /// Checks `args` against this tool's schema.
    pub fn validate(&self, args: &Map<String, Value>) -> Result<(), String> {
        for key in args.keys() {
            if !self.params.iter().any(|p| p.name == key) {
                return Err(format!("{}: unexpected argument {key:?}", self.name));
            }
        }
        if args.len() < self.min_properties {
            return Err(format!(
                "{}: at least {} argument(s) required",
                self.name, self.min_properties
            ));
        }
        for p in self.params {
            let Some(v) = args.get(p.name) else {
                if p.required {
                    return Err(format!("{}: missing required argument {:?}", self.name, p.name));
                }
                continue;
            };
            let ok = match p.kind {
                ParamKind::Str => v.is_string(),
                ParamKind::Int { min, max } => v.as_i64().is_some_and(|n| (min..=max).contains(&n)),
                ParamKind::StrList => v.as_array().is_some_and(|a| a.iter().all(Value::is_string)),
            };
            if !ok {
                let want = match p.kind {
                    ParamKind::Str => "a string".to_string(),
                    ParamKind::Int { min, max } => format!("an integer in {min}..={max}"),
                    ParamKind::StrList => "an array of strings".to_string(),
                };
                return Err(format!("{}: argument {:?} must be {want}", self.name, p.name));
            }
        }
        Ok(())
    }
}

/// Result content for `tools/call`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolOutput {
    pub text: String,
    pub structured: Option<Value>,
    pub is_error: bool,
}

impl ToolOutput {
    fn ok(text: String, structured: impl Serialize) -> Self {
        Self {
            text,
            structured: serde_json::to_value(structured).ok(),
            is_error: false,
        }
    }

    fn error(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            structured: None,
            is_error: true,
        }
    }

    pub fn to_result(&self) -> Value {
        let mut result = json!({
            "content": [{"type": "text", "text": self.text}],
            "isError": self.is_error,
        });
        if let Some(s) = &self.structured {
            result["structuredContent"] = s.clone();
        }
        result
    }
}

impl From<BackendError> for ToolOutput {
    fn from(err: BackendError) -> Self {
        ToolOutput::error(format!("Error: {err}"))
    }
}

/// Per-process state. Only the login survives between calls.
#[derive(Debug, Clone, Default)]
pub struct Session {
    pub logged_in: Option<String>,
}

fn str_arg<'a>(args: &'a Map<String, Value>, name: &str) -> Option<&'a str> {
    args.get(name).and_then(Value::as_str)
}

fn limit_arg(args: &Map<String, Value>) -> Option<u64> {
    args.get("limit").and_then(Value::as_u64)
}

/// Runs a validated call against the backend.
pub fn execute(spec: &ToolSpec, args: &Map<String, Value>, session: &mut Session, backend: &dyn Backend) -> ToolOutput {
    match spec.name {
        "login" => match validate_agent_name(str_arg(args, "agent_name").unwrap_or_default()) {
            Ok(name) => {
                let text = format!("Logged in as {name}.");
                session.logged_in = Some(name.clone());
                ToolOutput::ok(text, json!({"agent_name": name}))
            }
            Err(e) => ToolOutput::error(format!("Error: {e}")),
        },
        "read_posts" => {
            let tag = str_arg(args, "tag");
            match backend.list_posts(tag, limit_arg(args)) {
                Ok(list) => ToolOutput::ok(render_posts(&list, tag), &list),
                Err(e) => e.into(),
            }
        }
        "create_post" => {
            let Some(author) = session.logged_in.clone() else {
                return ToolOutput::error("Error: not logged in. Call login first.");
            };
            let tags: Vec<String> = args
                .get("tags")
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
                .unwrap_or_default();
            match backend.create_post(&author, str_arg(args, "body").unwrap_or_default(), &tags) {
                Ok(post) => ToolOutput::ok(format!("Post created with id {}.", post.id), &post),
                Err(e) => e.into(),
            }
        }
        "process_thoughts" => {
            let sections = thought_sections(args);
            match backend.create_journal_entry(&sections) {
                Ok(entry) => ToolOutput::ok(format!("Journal entry saved with id {}.", entry.id), &entry),
                Err(e) => e.into(),
            }
        }
        "search_journal" => {
            let query = str_arg(args, "query").unwrap_or_default();
            match backend.search_journal(query, limit_arg(args)) {
                Ok(resp) => ToolOutput::ok(render_hits(&resp), &resp),
                Err(e) => e.into(),
            }
        }
        "read_entry" => match backend.read_entry(str_arg(args, "entry_id").unwrap_or_default()) {
            Ok(entry) => ToolOutput::ok(render_entry(&entry), &entry),
            Err(e) => e.into(),
        },
        "list_recent" => match backend.list_recent(limit_arg(args)) {
            Ok(list) => ToolOutput::ok(render_recent(&list), &list),
            Err(e) => e.into(),
        },
        other => ToolOutput::error(format!("Error: no handler for {other}")),
    }
}

/// Maps `process_thoughts` arguments onto journal section categories.
/// `notes` joins the reflective-observations section.
pub fn thought_sections(args: &Map<String, Value>) -> BTreeMap<String, String> {
    let mut sections = BTreeMap::new();
    let fields = [
        ("technical_insights", TECHNICAL_INSIGHTS),
        ("debugging_notes", DEBUGGING_NOTES),
        ("reflective_observations", REFLECTIVE_OBSERVATIONS),
        ("notes", REFLECTIVE_OBSERVATIONS),
    ];
    for (arg, category) in fields {
        let Some(text) = str_arg(args, arg) else { continue };
        if text.trim().is_empty() {
            continue;
        }
        sections
            .entry(category.to_string())
            .and_modify(|s: &mut String| {
                s.push_str("\n\n");
                s.push_str(text);
            })
            .or_insert_with(|| text.to_string());
    }
    sections
}

fn heading(category: &str) -> String {
    category
        .split('-')
        .map(|w| {
            let mut c = w.chars();
            c.next()
                .map(|f| f.to_uppercase().chain(c).collect::<String>())
                .unwrap_or_default()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn render_post(post: &Post) -> String {
    let tags = if post.tags.is_empty() {
        String::new()
    } else {
        format!(" [{}]", post.tags.join(", "))
    };
    format!(
        "#{} by {} at {}{}\n{}",
        post.id,
        post.author,
        format_micros(&post.created_at),
        tags,
        post.body
    )
}

pub fn render_posts(list: &PostList, tag: Option<&str>) -> String {
    let filter = tag.map(|t| format!(" tagged \"{t}\"")).unwrap_or_default();
    if list.posts.is_empty() {
        return format!("No posts{filter}.");
    }
    let mut out = format!("{} post(s){filter}:\n", list.posts.len());
    for post in &list.posts {
        out.push('\n');
        out.push_str(&render_post(post));
        out.push('\n');
    }
    out
}

pub fn render_hits(resp: &SearchResponse) -> String {
    if resp.hits.is_empty() {
        return "No matching journal entries.".to_string();
    }
    let mut out = format!("{} matching journal entries:\n", resp.hits.len());
    for (i, hit) in resp.hits.iter().enumerate() {
        let _ = write!(
            out,
            "\n{}. [score {:.3}] {}\n   {}\n",
            i + 1,
            round_score(hit.score),
            hit.entry_id,
            hit.snippet
        );
    }
    out
}

pub fn render_entry(entry: &JournalEntryView) -> String {
    let mut out = format!("Journal entry {} ({})\n", entry.id, format_micros(&entry.created_at));
    for (category, text) in ordered_sections(&entry.sections) {
        let _ = write!(out, "\n## {}\n{}\n", heading(category), text);
    }
    out
}

pub fn render_recent(list: &JournalList) -> String {
    if list.entries.is_empty() {
        return "No journal entries yet.".to_string();
    }
    let mut out = format!("{} recent journal entries:\n", list.entries.len());
    for entry in &list.entries {
        let first = ordered_sections(&entry.sections)
            .first()
            .map(|(_, t)| snippet(t, 120))
            .unwrap_or_default();
        let _ = write!(
            out,
            "\n- {} ({}): {}",
            entry.id,
            format_micros(&entry.created_at),
            first
        );
    }
    out.push('\n');
    out
}

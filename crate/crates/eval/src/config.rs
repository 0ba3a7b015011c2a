use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use botboard_core::model::{Phase, Variant};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompts;

pub const DEFAULT_TIMEOUT_S: u64 = 600;
pub const DEFAULT_PARALLELISM: usize = 4;
pub const DEFAULT_REMEDIATION_PASSES: u32 = 3;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("problem list is empty")]
    NoProblems,
    #[error("repetitions must be at least 1")]
    NoRepetitions,
    #[error("variant list is empty")]
    NoVariants,
    #[error("model label list is empty")]
    NoModels,
    #[error("{0} {1:?} is listed twice")]
    Duplicate(&'static str, String),
    #[error("{0} {1:?} is not usable as a path component")]
    UnsafeName(&'static str, String),
    #[error("{0} must be at least 1")]
    NonPositive(&'static str),
    #[error("prompt asset for {variant}: {source}")]
    Asset {
        variant: Variant,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Where the Botboard backend lives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendConfig {
    /// Started in-process on an ephemeral port. `db_path` defaults to
    /// `<workspace>/botboard.sqlite`.
    Embedded {
        #[serde(default)]
        db_path: Option<PathBuf>,
    },
    /// An already running server; provisioning goes through its admin endpoint.
    Remote { url: String, admin_key: String },
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Embedded { db_path: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RunnerConfig {
    /// Deterministic stand-in agent. Per-problem scripts are read from
    /// `<scripts_dir>/<problem>.json`; problems without one use defaults.
    Scripted {
        #[serde(default)]
        scripts_dir: Option<PathBuf>,
        #[serde(default)]
        seed: u64,
    },
    /// Any program honoring the runner environment contract.
    ExternalCommand {
        command: Vec<String>,
        #[serde(default)]
        env: BTreeMap<String, String>,
    },
}

impl Default for RunnerConfig {
    fn default() -> Self {
        RunnerConfig::Scripted {
            scripts_dir: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Processed in this order within every pipeline.
    pub problems: Vec<String>,
    pub repetitions: u32,
    #[serde(default = "all_variants")]
    pub variants: Vec<Variant>,
    pub model_labels: Vec<String>,
    pub workspace_root: PathBuf,
    /// Holds `<problem>/problem.json` stubs.
    #[serde(default)]
    pub problems_dir: Option<PathBuf>,
    /// Replaces the bundled instruction text for a variant.
    #[serde(default)]
    pub prompt_assets: BTreeMap<Variant, PathBuf>,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub runner: RunnerConfig,
    /// When set, tool sessions spawn this `mcp-server` binary instead of
    /// serving the protocol in-process.
    #[serde(default)]
    pub mcp_command: Option<PathBuf>,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Remediation rounds `remediate` performs before giving up.
    #[serde(default = "default_remediation_passes")]
    pub remediation_passes: u32,
}

fn all_variants() -> Vec<Variant> {
    Variant::ALL.to_vec()
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_S
}

fn default_parallelism() -> usize {
    DEFAULT_PARALLELISM
}

fn default_remediation_passes() -> u32 {
    DEFAULT_REMEDIATION_PASSES
}

impl ExperimentConfig {
    /// A config with defaults for everything but the matrix dimensions.
    pub fn new(
        problems: Vec<String>,
        repetitions: u32,
        variants: Vec<Variant>,
        model_labels: Vec<String>,
        workspace_root: impl Into<PathBuf>,
    ) -> Self {
        Self {
            problems,
            repetitions,
            variants,
            model_labels,
            workspace_root: workspace_root.into(),
            problems_dir: None,
            prompt_assets: BTreeMap::new(),
            backend: BackendConfig::default(),
            runner: RunnerConfig::default(),
            mcp_command: None,
            timeout_s: DEFAULT_TIMEOUT_S,
            parallelism: DEFAULT_PARALLELISM,
            remediation_passes: DEFAULT_REMEDIATION_PASSES,
        }
    }

    /// Reads and validates a JSON config. Relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: ExperimentConfig = serde_json::from_str(&raw).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.workspace_root);
        if let Some(p) = self.problems_dir.as_mut() {
            fix(p);
        }
        if let Some(p) = self.mcp_command.as_mut() {
            // Bare names are looked up on PATH.
            if p.components().count() > 1 {
                fix(p);
            }
        }
        self.prompt_assets.values_mut().for_each(fix);
        if let BackendConfig::Embedded { db_path: Some(p) } = &mut self.backend {
            fix(p);
        }
        if let RunnerConfig::Scripted {
            scripts_dir: Some(p), ..
        } = &mut self.runner
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.problems.is_empty() {
            return Err(ConfigError::NoProblems);
        }
        if self.repetitions == 0 {
            return Err(ConfigError::NoRepetitions);
        }
        if self.variants.is_empty() {
            return Err(ConfigError::NoVariants);
        }
        if self.model_labels.is_empty() {
            return Err(ConfigError::NoModels);
        }
        unique_safe_names("problem", self.problems.iter().map(String::as_str))?;
        unique_safe_names("model label", self.model_labels.iter().map(String::as_str))?;
        let mut seen = BTreeSet::new();
        for v in &self.variants {
            if !seen.insert(*v) {
                return Err(ConfigError::Duplicate("variant", v.to_string()));
            }
        }
        if self.timeout_s == 0 {
            return Err(ConfigError::NonPositive("timeout_s"));
        }
        if self.parallelism == 0 {
            return Err(ConfigError::NonPositive("parallelism"));
        }
        if self.remediation_passes == 0 {
            return Err(ConfigError::NonPositive("remediation_passes"));
        }
        Ok(())
    }

    /// Every (variant, phase) configuration, in variant order.
    pub fn phase_plan(&self) -> Vec<(Variant, Phase)> {
        self.variants
            .iter()
            .flat_map(|v| v.phases().iter().map(move |p| (*v, *p)))
            .collect()
    }

    /// Instruction text for a variant: an override file if configured,
    /// otherwise the bundled asset. Baseline gets none.
    pub fn instructions(&self, variant: Variant) -> Result<Option<String>, ConfigError> {
        match self.prompt_assets.get(&variant) {
            Some(path) => std::fs::read_to_string(path)
                .map(Some)
                .map_err(|source| ConfigError::Asset { variant, source }),
            None => Ok(prompts::instructions(variant).map(str::to_string)),
        }
    }

    pub fn db_path(&self) -> PathBuf {
        match &self.backend {
            BackendConfig::Embedded { db_path: Some(p) } => p.clone(),
            _ => self.workspace_root.join("botboard.sqlite"),
        }
    }
}

fn unique_safe_names<'a>(what: &'static str, names: impl Iterator<Item = &'a str>) -> Result<(), ConfigError> {
    let mut seen = BTreeSet::new();
    for name in names {
        let safe = !name.is_empty()
            && name != "."
            && name != ".."
            && name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
        if !safe {
            return Err(ConfigError::UnsafeName(what, name.to_string()));
        }
        if !seen.insert(name) {
            return Err(ConfigError::Duplicate(what, name.to_string()));
        }
    }
    Ok(())
}

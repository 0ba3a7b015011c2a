//! Markdown and CSV rendering of per-configuration statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use botboard_core::model::{Phase, RunRecord, Variant};
use botboard_core::runlog::RunLog;
use serde::Serialize;

use crate::behavior::{behavior_summary, format_ratio, BehaviorSummary};
use crate::hard::{select_hard_questions, HardQuestionSet};
use crate::stats::{percent_delta, round_to, summarize, MetricsSummary, SigmaKind};
use crate::tokens::{token_rollup, TokenMeans};
use crate::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Metric {
    #[serde(rename = "cost_usd")]
    Cost,
    #[serde(rename = "turns")]
    Turns,
    #[serde(rename = "wall_time_s")]
    WallTime,
    #[serde(rename = "tokens.input")]
    TokensInput,
    #[serde(rename = "tokens.cache_create")]
    TokensCacheCreate,
    #[serde(rename = "tokens.cache_read")]
    TokensCacheRead,
    #[serde(rename = "tokens.output")]
    TokensOutput,
    #[serde(rename = "tokens.total")]
    TokensTotal,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::Cost,
        Metric::Turns,
        Metric::WallTime,
        Metric::TokensInput,
        Metric::TokensCacheCreate,
        Metric::TokensCacheRead,
        Metric::TokensOutput,
        Metric::TokensTotal,
    ];

    /// Metrics reported for hard-question subsets.
    pub const HARD: [Metric; 3] = [Metric::Cost, Metric::Turns, Metric::WallTime];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Cost => "cost_usd",
            Metric::Turns => "turns",
            Metric::WallTime => "wall_time_s",
            Metric::TokensInput => "tokens.input",
            Metric::TokensCacheCreate => "tokens.cache_create",
            Metric::TokensCacheRead => "tokens.cache_read",
            Metric::TokensOutput => "tokens.output",
            Metric::TokensTotal => "tokens.total",
        }
    }

    fn title(self) -> &'static str {
        match self {
            Metric::Cost => "Cost",
            Metric::Turns => "Turns",
            Metric::WallTime => "Wall time (s)",
            Metric::TokensInput => "Input tokens",
            Metric::TokensCacheCreate => "Cache creation tokens",
            Metric::TokensCacheRead => "Cache read tokens",
            Metric::TokensOutput => "Output tokens",
            Metric::TokensTotal => "Total tokens",
        }
    }

    pub fn value(self, r: &RunRecord) -> f64 {
        match self {
            Metric::Cost => r.cost_usd,
            Metric::Turns => f64::from(r.turns),
            Metric::WallTime => r.wall_time_s,
            Metric::TokensInput => r.tokens.input as f64,
            Metric::TokensCacheCreate => r.tokens.cache_create as f64,
            Metric::TokensCacheRead => r.tokens.cache_read as f64,
            Metric::TokensOutput => r.tokens.output as f64,
            Metric::TokensTotal => r.tokens.total as f64,
        }
    }

    pub fn format(self, v: f64) -> String {
        match self {
            Metric::Cost => format!("${:.3}", v),
            Metric::Turns | Metric::WallTime => format!("{:.1}", v),
            _ => thousands(v.round() as i64),
        }
    }
}

fn thousands(n: i64) -> String {
    let digits = n.unsigned_abs().to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    if n < 0 {
        out.insert(0, '-');
    }
    out
}

pub fn format_delta(delta: f64) -> String {
    format!("({}{:.1}%)", if delta >= 0.0 { "+" } else { "" }, delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub markdown: bool,
    pub csv: bool,
}

impl Default for Formats {
    fn default() -> Self {
        Self {
            markdown: true,
            csv: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub k_sigmas: Vec<f64>,
    pub sigma_kind: SigmaKind,
    pub formats: Formats,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            k_sigmas: vec![0.5],
            sigma_kind: SigmaKind::Population,
            formats: Formats::default(),
        }
    }
}

/// Configuration a record belongs to.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConfigKey {
    pub model_label: String,
    pub variant: Variant,
    pub phase: Phase,
}

impl ConfigKey {
    pub fn of(r: &RunRecord) -> Self {
        Self {
            model_label: r.model_label.clone(),
            variant: r.variant,
            phase: r.phase,
        }
    }

    fn configuration(&self) -> String {
        match self.variant {
            Variant::Baseline => "Baseline".into(),
            Variant::Journal => "Journal".into(),
            Variant::Social => "Social".into(),
            Variant::JournalSocial => "Journal-Social".into(),
        }
    }

    fn context(&self) -> &'static str {
        match self.phase {
            Phase::None => "--",
            Phase::Empty => "Empty",
            Phase::Nonempty => "Nonempty",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub key: ConfigKey,
    /// `all`, or `hard-k<k>` for a hard-question subset.
    pub subset: String,
    pub metric: Metric,
    pub summary: MetricsSummary,
    /// Mean vs the same model's baseline mean on the same subset.
    pub delta_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub summaries: Vec<SummaryRow>,
    pub hard_sets: Vec<HardQuestionSet>,
    pub tokens: Vec<(ConfigKey, TokenMeans)>,
    pub behavior: Vec<(ConfigKey, BehaviorSummary)>,
    pub markdown: String,
}

fn subset_label(k: f64) -> String {
    format!("hard-k{k}")
}

fn summary_rows(
    groups: &BTreeMap<ConfigKey, Vec<&RunRecord>>,
    subset: &str,
    metrics: &[Metric],
    keep: impl Fn(&RunRecord) -> bool,
) -> Result<Vec<SummaryRow>, AnalysisError> {
    let mut rows = Vec::new();
    let mut baseline_means: BTreeMap<Metric, f64> = BTreeMap::new();
    for (key, records) in groups {
        let kept: Vec<&RunRecord> = records.iter().copied().filter(|r| keep(r)).collect();
        if kept.is_empty() {
            continue;
        }
        for &metric in metrics {
            let values: Vec<f64> = kept.iter().map(|r| metric.value(r)).collect();
            let summary = summarize(&values)?;
            let delta_pct = if key.variant == Variant::Baseline {
                baseline_means.insert(metric, summary.mean);
                None
            } else {
                baseline_means
                    .get(&metric)
                    .and_then(|b| percent_delta(summary.mean, *b).ok())
            };
            rows.push(SummaryRow {
                key: key.clone(),
                subset: subset.to_string(),
                metric,
                summary,
                delta_pct,
            });
        }
    }
    Ok(rows)
}

/// Builds every table. Infrastructure-failed records are excluded.
pub fn emit_report(records: &[RunRecord], logs: &[RunLog], options: &ReportOptions) -> Result<Report, AnalysisError> {
    let ok: Vec<&RunRecord> = records.iter().filter(|r| r.is_ok()).collect();
    let models: BTreeSet<&str> = ok.iter().map(|r| r.model_label.as_str()).collect();
    if models.is_empty() {
        return Err(AnalysisError::MissingBaseline(String::new()));
    }

    let mut summaries = Vec::new();
    let mut hard_sets = Vec::new();
    let mut tokens = Vec::new();
    let mut behavior = Vec::new();
    let mut md = String::from("# Evaluation report\n");

    for model in models {
        let mut groups: BTreeMap<ConfigKey, Vec<&RunRecord>> = BTreeMap::new();
        for r in ok.iter().filter(|r| r.model_label == model) {
            groups.entry(ConfigKey::of(r)).or_default().push(r);
        }
        // Baseline sorts first, so deltas always have a reference.
        if groups.keys().next().map(|k| k.variant) != Some(Variant::Baseline) {
            return Err(AnalysisError::MissingBaseline(model.to_string()));
        }
        let _ = write!(md, "\n## {model}\n");

        let rows = summary_rows(&groups, "all", &Metric::ALL, |_| true)?;
        for metric in [Metric::Cost, Metric::Turns, Metric::WallTime] {
            let _ = write!(md, "\n### {} (all problems)\n\n", metric.title());
            render_distribution(&mut md, rows.iter().filter(|r| r.metric == metric));
        }

        let _ = write!(md, "\n### Average token usage\n\n");
        md.push_str("| Configuration | Context | n | Input | Cache Creation | Cache Read | Output | Total |\n");
        md.push_str("|---|---|---|---|---|---|---|---|\n");
        for (key, group) in &groups {
            let means = token_rollup(group.iter().copied())?;
            let total_delta = rows
                .iter()
                .find(|r| r.key == *key && r.metric == Metric::TokensTotal)
                .and_then(|r| r.delta_pct)
                .map(|d| format!(" {}", format_delta(d)))
                .unwrap_or_default();
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} | {} | {}{} |",
                key.configuration(),
                key.context(),
                means.n,
                thousands(means.input.round() as i64),
                thousands(means.cache_create.round() as i64),
                thousands(means.cache_read.round() as i64),
                thousands(means.output.round() as i64),
                thousands(means.total.round() as i64),
                total_delta
            );
            tokens.push((key.clone(), means));
        }
        summaries.extend(rows);

        let baseline: Vec<RunRecord> = groups
            .iter()
            .filter(|(k, _)| k.variant == Variant::Baseline)
            .flat_map(|(_, g)| g.iter().map(|r| (*r).clone()))
            .collect();
        for &k in &options.k_sigmas {
            let _ = write!(md, "\n### Hard questions (mu + {k} sigma)\n\n");
            let set = match select_hard_questions(&baseline, k, options.sigma_kind) {
                Ok(set) => set,
                Err(e) => {
                    let _ = writeln!(md, "Not computed: {e}.");
                    continue;
                }
            };
            let _ = writeln!(
                md,
                "Threshold ${:.4} (mu ${:.4}, {} sigma ${:.4}); {} of {} problems: {}\n",
                set.threshold,
                set.mu,
                match set.sigma_kind {
                    SigmaKind::Population => "population",
                    SigmaKind::Sample => "sample",
                },
                set.sigma,
                set.members.len(),
                set.per_problem.len(),
                if set.members.is_empty() {
                    "none".to_string()
                } else {
                    set.members.join(", ")
                }
            );
            let label = subset_label(k);
            let rows = summary_rows(&groups, &label, &Metric::HARD, |r| set.contains(&r.problem_id))?;
            for metric in Metric::HARD {
                let _ = write!(md, "{}:\n\n", metric.title());
                render_distribution(&mut md, rows.iter().filter(|r| r.metric == metric));
                md.push('\n');
            }
            summaries.extend(rows);
            hard_sets.push(set);
        }

        let mut by_config: BTreeMap<ConfigKey, Vec<&RunLog>> = BTreeMap::new();
        for log in logs
            .iter()
            .filter(|l| l.record.model_label == model && l.record.is_ok())
        {
            by_config.entry(ConfigKey::of(&log.record)).or_default().push(log);
        }
        let _ = write!(md, "\n### Tool usage\n\n");
        md.push_str("| Configuration | Context | Runs | Journal writes | Journal reads | Journal searches | Journal W/R | Social writes | Social reads | Social W/R | Pure post-completion | Mixed | Pure share |\n");
        md.push_str("|---|---|---|---|---|---|---|---|---|---|---|---|---|\n");
        let total = behavior_summary(by_config.values().flatten().copied());
        let model_key = ConfigKey {
            model_label: model.to_string(),
            variant: Variant::Baseline,
            phase: Phase::None,
        };
        for (key, group) in by_config {
            if key.variant == Variant::Baseline {
                continue;
            }
            let s = behavior_summary(group);
            render_behavior(&mut md, &key.configuration(), key.context(), &s);
            behavior.push((key, s));
        }
        render_behavior(&mut md, "All", "--", &total);
        behavior.push((model_key, total));
    }

    Ok(Report {
        summaries,
        hard_sets,
        tokens,
        behavior,
        markdown: md,
    })
}

fn render_distribution<'a>(md: &mut String, rows: impl Iterator<Item = &'a SummaryRow>) {
    md.push_str("| Configuration | Context | n | Mean | Median | P90 | P95 | P99 |\n");
    md.push_str("|---|---|---|---|---|---|---|---|\n");
    for row in rows {
        let f = |v| row.metric.format(v);
        let delta = row
            .delta_pct
            .map(|d| format!(" {}", format_delta(d)))
            .unwrap_or_default();
        let s = &row.summary;
        let _ = writeln!(
            md,
            "| {} | {} | {} | {}{} | {} | {} | {} | {} |",
            row.key.configuration(),
            row.key.context(),
            s.n,
            f(s.mean),
            delta,
            f(s.median),
            f(s.p90),
            f(s.p95),
            f(s.p99)
        );
    }
}

fn render_behavior(md: &mut String, config: &str, context: &str, s: &BehaviorSummary) {
    let share = s
        .celebratory_rate()
        .map(|r| format!("{:.0}%", round_to(r * 100.0, 0)))
        .unwrap_or_else(|| "--".into());
    let _ = writeln!(
        md,
        "| {config} | {context} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {share} |",
        s.runs,
        s.journal_writes,
        s.journal_reads,
        s.journal_searches,
        format_ratio(s.journal_ratio()),
        s.social_writes,
        s.social_reads,
        format_ratio(s.social_ratio()),
        s.pure_post_completion,
        s.mixed
    );
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl Report {
    pub fn summaries_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "model",
            "variant",
            "phase",
            "subset",
            "metric",
            "n",
            "mean",
            "median",
            "p90",
            "p95",
            "p99",
            "delta_pct",
        ])?;
        for r in &self.summaries {
            let s = &r.summary;
            w.write_record([
                r.key.model_label.clone(),
                r.key.variant.to_string(),
                r.key.phase.to_string(),
                r.subset.clone(),
                r.metric.name().to_string(),
                s.n.to_string(),
                s.mean.to_string(),
                s.median.to_string(),
                s.p90.to_string(),
                s.p95.to_string(),
                s.p99.to_string(),
                opt(r.delta_pct),
            ])?;
        }
        finish(w)
    }

    pub fn hard_questions_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "model",
            "k_sigma",
            "sigma_kind",
            "mu",
            "sigma",
            "threshold",
            "problem_id",
            "baseline_mean_cost",
            "hard",
        ])?;
        for set in &self.hard_sets {
            for (problem, cost) in &set.per_problem {
                w.write_record([
                    set.model_label.clone(),
                    set.k_sigma.to_string(),
                    match set.sigma_kind {
                        SigmaKind::Population => "population".into(),
                        SigmaKind::Sample => "sample".into(),
                    },
                    set.mu.to_string(),
                    set.sigma.to_string(),
                    set.threshold.to_string(),
                    problem.clone(),
                    cost.to_string(),
                    set.contains(problem).to_string(),
                ])?;
            }
        }
        finish(w)
    }

    pub fn behavior_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "model",
            "variant",
            "phase",
            "runs",
            "journal_writes",
            "journal_reads",
            "journal_searches",
            "journal_write_read_ratio",
            "social_writes",
            "social_reads",
            "social_write_read_ratio",
            "pure_post_completion",
            "mixed",
            "pre_completion",
            "no_tool_use",
            "unmarked",
            "celebratory_pure_rate",
        ])?;
        for (key, s) in &self.behavior {
            let (variant, phase) = if key.variant == Variant::Baseline {
                ("all".to_string(), "all".to_string())
            } else {
                (key.variant.to_string(), key.phase.to_string())
            };
            w.write_record([
                key.model_label.clone(),
                variant,
                phase,
                s.runs.to_string(),
                s.journal_writes.to_string(),
                s.journal_reads.to_string(),
                s.journal_searches.to_string(),
                format_ratio(s.journal_ratio()),
                s.social_writes.to_string(),
                s.social_reads.to_string(),
                format_ratio(s.social_ratio()),
                s.pure_post_completion.to_string(),
                s.mixed.to_string(),
                s.pre_completion.to_string(),
                s.no_tool_use.to_string(),
                s.unmarked.to_string(),
                opt(s.celebratory_rate()),
            ])?;
        }
        finish(w)
    }

    /// Writes `report.md` and/or the three CSV files into `dir`.
    pub fn write_to(&self, dir: &Path, formats: Formats) -> io::Result<Vec<String>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        if formats.markdown {
            fs::write(dir.join("report.md"), &self.markdown)?;
            written.push("report.md".to_string());
        }
        if formats.csv {
            let files = [
                ("summaries.csv", self.summaries_csv()),
                ("hard_questions.csv", self.hard_questions_csv()),
                ("behavior.csv", self.behavior_csv()),
            ];
            for (name, body) in files {
                fs::write(dir.join(name), body.map_err(io::Error::other)?)?;
                written.push(name.to_string());
            }
        }
        Ok(written)
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, csv::Error> {
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

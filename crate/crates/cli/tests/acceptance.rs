//! Acceptance suite. Prints one PASS/FAIL line per criterion, with its
//! runtime against the budget, and exits nonzero if any criterion fails.
//!
//! `cargo test -p botboard-cli --test acceptance [-- NAME]` runs everything,
//! or only the criteria whose name contains NAME.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, ExitCode, Stdio};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use botboard_analysis::behavior::{behavior_summary, classify_celebratory, format_ratio, CelebratoryClass};
use botboard_analysis::stats::{percent_delta, summarize};
use botboard_analysis::{select_hard_questions, SigmaKind};
use botboard_core::embedding::{EmbedError, EmbeddingProvider, TrigramEmbedder};
use botboard_core::model::{
    EmbeddingVector, Phase, RunRecord, RunStatus, TeamId, TokenCounts, ToolAction, ToolEvent, ToolKind, Variant,
};
use botboard_core::runlog::RunLog;
use botboard_core::search::{search, IndexedEntry, VectorIndex};
use botboard_core::wire::{TeamCredentials, TeamExport};
use botboard_eval::config::RunnerConfig;
use botboard_eval::remediate::TeamPolicy;
use botboard_eval::{plan_runs, ExperimentConfig, Orchestrator, RemediationAction};
use botboard_server::{BackgroundServer, Store};
use chrono::{TimeZone, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde_json::{json, Value};

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Duration,
    check: fn() -> Outcome,
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        name: "arithmetic-fidelity",
        budget: Duration::from_secs(1),
        check: arithmetic_fidelity,
    },
    Criterion {
        name: "run-matrix-count",
        budget: Duration::from_secs(1),
        check: run_matrix_count,
    },
    Criterion {
        name: "search-oracle",
        budget: Duration::from_secs(60),
        check: search_oracle,
    },
    Criterion {
        name: "team-isolation",
        budget: Duration::from_secs(30),
        check: team_isolation,
    },
    Criterion {
        name: "two-phase-inheritance",
        budget: Duration::from_secs(120),
        check: two_phase_inheritance,
    },
    Criterion {
        name: "remediation-policy",
        budget: Duration::from_secs(60),
        check: remediation_policy,
    },
    Criterion {
        name: "mcp-conformance",
        budget: Duration::from_secs(30),
        check: mcp_conformance,
    },
    Criterion {
        name: "statistics-oracle",
        budget: Duration::from_secs(30),
        check: statistics_oracle,
    },
    Criterion {
        name: "behavior-ratios",
        budget: Duration::from_secs(10),
        check: behavior_ratios,
    },
    Criterion {
        name: "durability",
        budget: Duration::from_secs(60),
        check: durability,
    },
];

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if std::env::args().any(|a| a == "--list") {
        for c in CRITERIA {
            println!("{}: test", c.name);
        }
        return ExitCode::SUCCESS;
    }
    // Failures are reported on the criterion's line, not as panic noise.
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    let mut ran = 0;
    for c in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let started = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|payload| {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        let elapsed = started.elapsed();
        let result = match result {
            Ok(_) if elapsed > c.budget => Err(format!("exceeded the {:?} budget", c.budget)),
            other => other,
        };
        let (verdict, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "{verdict} {:<22} {:>9.3}s / {:>4}s  {detail}",
            c.name,
            elapsed.as_secs_f64(),
            c.budget.as_secs()
        );
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn workspace_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("..")
}

fn http() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(10)))
        .build()
        .into()
}

fn read(resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Result<(u16, Value), String> {
    let mut resp = resp.map_err(|e| e.to_string())?;
    let status = resp.status().as_u16();
    let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
    let value = if body.is_empty() {
        Value::Null
    } else {
        serde_json::from_str(&body).map_err(|e| format!("{status} {body}: {e}"))?
    };
    Ok((status, value))
}

fn get(agent: &ureq::Agent, url: &str, key: &str) -> Result<(u16, Value), String> {
    read(agent.get(url).header("X-Team-Key", key).call())
}

fn post(agent: &ureq::Agent, url: &str, key: &str, body: &Value) -> Result<(u16, Value), String> {
    read(
        agent
            .post(url)
            .header("X-Team-Key", key)
            .header("Content-Type", "application/json")
            .send(body.to_string().as_str()),
    )
}

// Cost means (variant, baseline) and their published deltas, both models.
const COST_PAIRS: [(f64, f64, f64); 12] = [
    (0.436, 0.720, -39.4),
    (0.565, 0.720, -21.5),
    (0.608, 0.720, -15.5),
    (0.520, 0.720, -27.8),
    (0.562, 0.720, -21.9),
    (0.611, 0.720, -15.2),
    (0.868, 0.805, 7.8),
    (0.736, 0.805, -8.6),
    (0.556, 0.805, -30.9),
    (0.483, 0.805, -40.0),
    (0.806, 0.805, 0.1),
    (0.847, 0.805, 5.2),
];

fn arithmetic_fidelity() -> Outcome {
    let mut misses = Vec::new();
    for (v, b, published) in COST_PAIRS {
        let got = percent_delta(v, b).map_err(|e| e.to_string())?;
        if (got - published).abs() > 0.05 {
            misses.push(format!("({v}, {b}) -> {got:.3} vs published {published}"));
        }
    }
    ensure(misses.is_empty(), || {
        format!(
            "{}/{} pairs outside ±0.05: {}",
            misses.len(),
            COST_PAIRS.len(),
            misses.join("; ")
        )
    })?;
    Ok(format!("{} pairs within ±0.05", COST_PAIRS.len()))
}

fn run_matrix_count() -> Outcome {
    let problems: Vec<String> = (1..=34).map(|i| format!("problem-{i:02}")).collect();
    let config = ExperimentConfig::new(
        problems,
        3,
        vec![
            Variant::Baseline,
            Variant::Journal,
            Variant::Social,
            Variant::JournalSocial,
        ],
        vec!["model-a".into(), "model-b".into()],
        "unused-workspace",
    );
    let plan = plan_runs(&config).map_err(|e| e.to_string())?;
    ensure(plan.len() == 1_428, || format!("{} planned runs", plan.len()))?;
    let mut cells: BTreeMap<(String, Variant, Phase), usize> = BTreeMap::new();
    for r in &plan {
        *cells.entry((r.model_label.clone(), r.variant, r.phase)).or_default() += 1;
    }
    ensure(cells.len() == 14, || {
        format!("{} model x variant-phase cells", cells.len())
    })?;
    if let Some((cell, n)) = cells.iter().find(|(_, n)| **n != 102) {
        return Err(format!("{cell:?} has {n} runs"));
    }
    Ok("1428 runs, 14 cells of 102".into())
}

/// Returns the same vector for every query.
struct FixedQuery(Vec<f32>);

impl EmbeddingProvider for FixedQuery {
    fn name(&self) -> &str {
        "fixed-query"
    }

    fn dimension(&self) -> usize {
        self.0.len()
    }

    fn embed(&self, _text: &str) -> Result<EmbeddingVector, EmbedError> {
        Ok(EmbeddingVector::new(self.0.clone(), self.0.len()).expect("query vector has its own dimension"))
    }
}

/// Every entry scored by the cosine definition, then a full sort: score
/// descending, newer first, then lexicographically smaller id.
fn oracle_ranking(entries: &[IndexedEntry], query: &[f32], limit: usize) -> Vec<(String, f64)> {
    let mut scored: Vec<(f64, &IndexedEntry)> = entries
        .iter()
        .map(|e| {
            let (mut dot, mut nq, mut ne) = (0.0f64, 0.0f64, 0.0f64);
            for (q, x) in query.iter().zip(e.vector.as_slice()) {
                dot += f64::from(*q) * f64::from(*x);
                nq += f64::from(*q) * f64::from(*q);
                ne += f64::from(*x) * f64::from(*x);
            }
            ((dot / (nq.sqrt() * ne.sqrt())).clamp(-1.0, 1.0), e)
        })
        .collect();
    scored.sort_by(|(sa, a), (sb, b)| {
        if sa != sb {
            return sb.partial_cmp(sa).unwrap();
        }
        if a.created_at != b.created_at {
            return b.created_at.cmp(&a.created_at);
        }
        a.entry_id.cmp(&b.entry_id)
    });
    scored
        .into_iter()
        .take(limit)
        .map(|(s, e)| (e.entry_id.clone(), s))
        .collect()
}

fn search_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5ea6c4);
    let team = TeamId::new("oracle").unwrap();
    let trigram = TrigramEmbedder::default();
    let words = [
        "bowling", "frame", "strike", "forth", "stack", "react", "cell", "bucket", "pour", "tenth",
    ];
    let mut ties = 0usize;
    for corpus in 0..100 {
        let n = if corpus % 10 == 0 {
            1_000
        } else {
            rng.random_range(1..=1_000)
        };
        // Half the corpora use coarse integer vectors so exact score ties are
        // common; the rest embed text drawn from a small vocabulary.
        let coarse = corpus % 2 == 0;
        let dim = if coarse { 4 } else { trigram.dimension() };
        let mut entries = Vec::with_capacity(n);
        let mut ids: Vec<u32> = (0..n as u32).collect();
        ids.shuffle(&mut rng);
        for id in ids {
            let vector = if coarse {
                let mut v: Vec<f32> = (0..dim).map(|_| rng.random_range(-2i8..=2) as f32).collect();
                if v.iter().all(|x| *x == 0.0) {
                    v[0] = 1.0;
                }
                EmbeddingVector::new(v, dim).unwrap()
            } else {
                let len = rng.random_range(1..4);
                let text: Vec<&str> = (0..len).map(|_| *words.choose(&mut rng).unwrap()).collect();
                trigram.embed(&text.join(" ")).unwrap()
            };
            entries.push(IndexedEntry {
                entry_id: format!("e{id:05x}"),
                created_at: Utc.timestamp_opt(rng.random_range(0..20), 0).unwrap(),
                snippet: String::new(),
                vector,
            });
        }
        let mut index = VectorIndex::new(team.clone(), dim);
        for e in &entries {
            index.insert(e.clone()).map_err(|e| e.to_string())?;
        }
        let query: Vec<f32> = if coarse {
            let mut q: Vec<f32> = (0..dim).map(|_| rng.random_range(-2i8..=2) as f32).collect();
            q[dim - 1] = 1.0;
            q
        } else {
            let text = words.choose(&mut rng).unwrap();
            trigram.embed(text).unwrap().as_slice().to_vec()
        };
        let provider = FixedQuery(query.clone());
        let limit = rng.random_range(1..=n + 5);
        let got: Vec<(String, f64)> = search(&index, &provider, "q", limit)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|h| (h.entry_id, h.score))
            .collect();
        let want = oracle_ranking(&entries, &query, limit);
        ties += want.windows(2).filter(|w| w[0].1 == w[1].1).count();
        if got.len() != want.len() {
            return Err(format!("corpus {corpus}: {} hits, oracle {}", got.len(), want.len()));
        }
        for (i, (g, w)) in got.iter().zip(&want).enumerate() {
            if g.0 != w.0 || g.1.to_bits() != w.1.to_bits() {
                return Err(format!("corpus {corpus} rank {i}: {g:?} vs oracle {w:?}"));
            }
        }
    }
    ensure(ties > 1_000, || format!("only {ties} tied neighbours exercised"))?;
    Ok(format!("100 corpora exact, {ties} tied neighbours"))
}

struct TeamSide {
    creds: TeamCredentials,
    marker: String,
    entries: Mutex<Vec<String>>,
}

fn team_isolation() -> Outcome {
    const ADMIN: &str = "admin-key";
    let store = Store::open_in_memory(Arc::new(TrigramEmbedder::default())).map_err(|e| e.to_string())?;
    let server = BackgroundServer::start(Arc::new(store), Some(ADMIN.into())).map_err(|e| e.to_string())?;
    let base = server.url();
    let agent = http();
    let mut sides = Vec::new();
    for _ in 0..2 {
        let (status, body) = read(
            agent
                .post(format!("{base}/api/v1/admin/teams"))
                .header("X-Admin-Key", ADMIN)
                .header("Content-Type", "application/json")
                .send("{}"),
        )?;
        ensure(status == 201 || status == 200, || {
            format!("provisioning returned {status}")
        })?;
        let creds: TeamCredentials = serde_json::from_value(body).map_err(|e| e.to_string())?;
        sides.push(Arc::new(TeamSide {
            marker: format!("marker-{}", creds.team_id),
            creds,
            entries: Mutex::new(Vec::new()),
        }));
    }

    let requests = Arc::new(AtomicUsize::new(0));
    let leaks = Arc::new(Mutex::new(Vec::<String>::new()));
    let threads: Vec<_> = (0..6u64)
        .map(|t| {
            let me = sides[(t % 2) as usize].clone();
            let other = sides[1 - (t % 2) as usize].clone();
            let (agent, base, requests, leaks) = (agent.clone(), base.clone(), requests.clone(), leaks.clone());
            std::thread::spawn(move || -> Result<(), String> {
                let mut rng = ChaCha8Rng::seed_from_u64(t);
                let key = me.creds.key.as_str();
                let own = me.creds.team_id.as_str();
                let leak = |what: String| leaks.lock().unwrap().push(what);
                for i in 0..200 {
                    requests.fetch_add(1, Ordering::Relaxed);
                    match rng.random_range(0..8) {
                        0 => {
                            let body = json!({"author": "agent", "body": format!("{} post {t}-{i}", me.marker), "tags": ["shared"]});
                            let (s, _) = post(&agent, &format!("{base}/api/v1/posts"), key, &body)?;
                            ensure(s == 201, || format!("create post {s}"))?;
                        }
                        1 => {
                            let body = json!({"sections": {"notes": format!("{} shared journal note {t}-{i}", me.marker)}});
                            let (s, v) = post(&agent, &format!("{base}/api/v1/journal"), key, &body)?;
                            ensure(s == 201, || format!("create entry {s}"))?;
                            me.entries.lock().unwrap().push(v["id"].as_str().unwrap_or_default().to_string());
                        }
                        2 => {
                            let (_, v) = get(&agent, &format!("{base}/api/v1/posts?tag=shared&limit=500"), key)?;
                            for p in v["posts"].as_array().into_iter().flatten() {
                                if p["team"] != own || !p["body"].as_str().unwrap_or_default().contains(&me.marker) {
                                    leak(format!("post list: {p}"));
                                }
                            }
                        }
                        3 => {
                            let (_, v) = get(&agent, &format!("{base}/api/v1/journal/recent?limit=1000"), key)?;
                            for e in v["entries"].as_array().into_iter().flatten() {
                                if e["team"] != own || !e.to_string().contains(&me.marker) {
                                    leak(format!("recent: {e}"));
                                }
                            }
                        }
                        4 => {
                            let (_, v) = read(
                                agent
                                    .get(format!("{base}/api/v1/journal/search"))
                                    .header("X-Team-Key", key)
                                    .query("q", "shared journal note")
                                    .query("limit", "50")
                                    .call(),
                            )?;
                            for h in v["hits"].as_array().into_iter().flatten() {
                                if h["snippet"].as_str().unwrap_or_default().contains(&other.marker) {
                                    leak(format!("search: {h}"));
                                }
                            }
                        }
                        5 => {
                            let target = other.entries.lock().unwrap().choose(&mut rng).cloned();
                            if let Some(id) = target {
                                let (s, v) = get(&agent, &format!("{base}/api/v1/journal/{id}"), key)?;
                                if s != 404 {
                                    leak(format!("cross-team read of {id}: {s} {v}"));
                                }
                            }
                        }
                        6 => {
                            let target = me.entries.lock().unwrap().choose(&mut rng).cloned();
                            if let Some(id) = target {
                                let (s, v) = get(&agent, &format!("{base}/api/v1/journal/{id}"), key)?;
                                ensure(s == 200, || format!("own read of {id}: {s}"))?;
                                if v["team"] != own {
                                    leak(format!("own read: {v}"));
                                }
                            }
                        }
                        _ => {
                            let (_, v) = get(&agent, &format!("{base}/api/v1/export"), key)?;
                            let export: TeamExport = serde_json::from_value(v).map_err(|e| e.to_string())?;
                            if export.team.as_str() != own
                                || export.posts.iter().any(|p| p.team.as_str() != own)
                                || export.journal.iter().any(|e| e.team.as_str() != own)
                            {
                                leak(format!("export for {own} held foreign data"));
                            }
                        }
                    }
                }
                Ok(())
            })
        })
        .collect();
    for t in threads {
        t.join().map_err(|_| "worker panicked".to_string())??;
    }

    // Final state: each team holds exactly the entries it wrote.
    for side in &sides {
        let (_, v) = get(&agent, &format!("{base}/api/v1/export"), &side.creds.key)?;
        let export: TeamExport = serde_json::from_value(v).map_err(|e| e.to_string())?;
        let held: HashSet<String> = export.journal.iter().map(|e| e.id.clone()).collect();
        let wrote: HashSet<String> = side.entries.lock().unwrap().iter().cloned().collect();
        if held != wrote {
            leaks.lock().unwrap().push(format!(
                "{} holds {} entries, wrote {}",
                side.creds.team_id,
                held.len(),
                wrote.len()
            ));
        }
    }
    let leaks = leaks.lock().unwrap();
    let n = requests.load(Ordering::Relaxed);
    ensure(n >= 1_000, || format!("only {n} requests"))?;
    ensure(leaks.is_empty(), || {
        format!("{} leaks, first: {}", leaks.len(), leaks[0])
    })?;
    Ok(format!("{n} interleaved requests, 0 leaks"))
}

fn demo_fixture() -> PathBuf {
    workspace_dir().join("eval/fixtures/demo")
}

fn two_phase_inheritance() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut config = ExperimentConfig::load(&demo_fixture().join("config.json")).map_err(|e| e.to_string())?;
    config.workspace_root = dir.path().to_path_buf();
    ensure(
        config.problems.len() == 4 && config.variants.len() == 4 && config.repetitions == 1,
        || "demo fixture is not 4 variants x 4 problems x 1 rep".into(),
    )?;
    let orch = Orchestrator::from_config(config.clone()).map_err(|e| e.to_string())?;
    let summary = orch.run().map_err(|e| e.to_string())?;
    ensure(
        summary.executed == 28 && summary.infra_failures == 0 && summary.pipeline_errors.is_empty(),
        || {
            format!(
                "executed {} of 28, {} infra failures, errors {:?}",
                summary.executed, summary.infra_failures, summary.pipeline_errors
            )
        },
    )?;
    ensure(summary.phase_checks.len() == 3, || {
        format!("{} phase checks", summary.phase_checks.len())
    })?;
    for check in &summary.phase_checks {
        ensure(check.empty_start_empty && check.first_read_count == Some(0), || {
            format!("{}: empty phase did not start empty: {check:?}", check.pipeline)
        })?;
        ensure(
            check.handoff_identical && check.team_id == check.nonempty_team_id,
            || format!("{}: handoff differs: {check:?}", check.pipeline),
        )?;
    }

    let mut turns: HashMap<(Variant, Phase, String), u32> = HashMap::new();
    for run in orch.plan() {
        let path = dir.path().join("logs").join(run.log_relpath());
        let log: RunLog =
            serde_json::from_slice(&std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?)
                .map_err(|e| e.to_string())?;
        ensure(log.record.is_ok() && log.record.completed, || {
            format!("{run} did not complete")
        })?;
        turns.insert((run.variant, run.phase, run.problem_id.clone()), log.record.turns);
    }
    let mut compared = 0;
    for variant in [Variant::Journal, Variant::Social, Variant::JournalSocial] {
        let exports = dir.path().join(format!("exports/scripted-model/{variant}-rep1"));
        let end = std::fs::read(exports.join("empty-end.json")).map_err(|e| e.to_string())?;
        let start = std::fs::read(exports.join("nonempty-start.json")).map_err(|e| e.to_string())?;
        ensure(end == start, || {
            format!("{variant}: nonempty start differs from empty end")
        })?;
        let empty_start = std::fs::read(exports.join("empty-start.json")).map_err(|e| e.to_string())?;
        let export: TeamExport = serde_json::from_slice(&empty_start).map_err(|e| e.to_string())?;
        ensure(export.is_empty(), || format!("{variant}: empty phase began with data"))?;
        for problem in &config.problems {
            let t1 = turns[&(variant, Phase::Empty, problem.clone())];
            let t2 = turns[&(variant, Phase::Nonempty, problem.clone())];
            ensure(t2 < t1, || {
                format!("{variant} {problem}: phase 2 took {t2} turns, phase 1 {t1}")
            })?;
            compared += 1;
        }
    }
    Ok(format!(
        "28 runs, 3 handoffs byte-identical, {compared}/12 phase-2 runs used fewer turns"
    ))
}

fn remediation_policy() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scripts = dir.path().join("scripts");
    std::fs::create_dir_all(&scripts).map_err(|e| e.to_string())?;
    // One failing script per shape: both phases, empty only, nonempty only,
    // and the baseline.
    let shapes = [
        ("both", json!({"crash_attempts": {"empty": 1, "nonempty": 1}})),
        ("empty", json!({"crash_attempts": {"empty": 1}})),
        ("nonempty", json!({"stall_attempts": {"nonempty": 1}})),
        ("baseline", json!({"crash_attempts": {"none": 1}})),
        ("clean", json!({})),
    ];
    for (id, script) in &shapes {
        std::fs::write(scripts.join(format!("{id}.json")), script.to_string()).map_err(|e| e.to_string())?;
    }
    let mut config = ExperimentConfig::new(
        shapes.iter().map(|(id, _)| id.to_string()).collect(),
        1,
        vec![Variant::Baseline, Variant::Social],
        vec!["m".into()],
        dir.path().join("ws"),
    );
    config.runner = RunnerConfig::Scripted {
        scripts_dir: Some(scripts),
        seed: 17,
    };
    let orch = Orchestrator::from_config(config).map_err(|e| e.to_string())?;
    let summary = orch.run().map_err(|e| e.to_string())?;
    ensure(summary.infra_failures == 5, || {
        format!("{} injected failures, expected 5", summary.infra_failures)
    })?;
    let pipeline_team = orch.teams()["m/social/1"].team_id.clone();

    let outcome = orch.remediate().map_err(|e| e.to_string())?;
    let mut by_problem = BTreeMap::new();
    for a in &outcome.applied {
        if by_problem.insert(a.action.key().problem_id.clone(), a).is_some() {
            return Err(format!("{} remediated twice", a.action.key().problem_id));
        }
    }
    ensure(by_problem.len() == 4 && !by_problem.contains_key("clean"), || {
        format!("remediated {:?}", by_problem.keys().collect::<Vec<_>>())
    })?;
    let on_pipeline_team = |team: &Option<String>| team.as_deref() == Some(pipeline_team.as_str());

    let a = by_problem["both"];
    ensure(
        matches!(a.action, RemediationAction::RerunBoth { .. })
            && a.policy == TeamPolicy::NewTeam
            && a.team_id.is_some()
            && !on_pipeline_team(&a.team_id),
        || format!("both-failed shape: {a:?}"),
    )?;
    let b = by_problem["empty"];
    ensure(
        matches!(b.action, RemediationAction::RerunEmpty { .. })
            && b.policy == TeamPolicy::NewTeam
            && b.team_id.is_some()
            && !on_pipeline_team(&b.team_id)
            && b.team_id != a.team_id,
        || format!("empty-failed shape: {b:?}"),
    )?;
    let c = by_problem["nonempty"];
    ensure(
        matches!(c.action, RemediationAction::RerunNonempty { .. })
            && c.policy == TeamPolicy::SameTeam
            && on_pipeline_team(&c.team_id),
        || format!("nonempty-failed shape: {c:?}"),
    )?;
    let d = by_problem["baseline"];
    ensure(
        matches!(d.action, RemediationAction::RerunBaseline { .. }) && d.team_id.is_none(),
        || format!("baseline shape: {d:?}"),
    )?;
    for act in by_problem.values() {
        ensure(act.reruns.iter().all(|(_, _, s)| *s == RunStatus::Ok), || {
            format!("re-run failed: {act:?}")
        })?;
    }
    let c = &outcome.completeness;
    ensure(c.is_complete(), || format!("final matrix incomplete: {c:?}"))?;
    ensure(orch.remediate().map_err(|e| e.to_string())?.applied.is_empty(), || {
        "a second pass still acted".into()
    })?;
    Ok(format!(
        "4 shapes took the policy action, {}/{} runs ok",
        c.ok, c.planned
    ))
}

/// `mcp-server` as a child process, spoken to over its stdio pipes.
struct McpChild {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

impl McpChild {
    fn spawn(mode: &str, url: &str, key: &str) -> Result<Self, String> {
        let mut child = Command::new(env!("CARGO_BIN_EXE_mcp-server"))
            .args(["--mode", mode, "--backend-url", url, "--team-key", key])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| e.to_string())?;
        Ok(Self {
            stdin: child.stdin.take(),
            stdout: BufReader::new(child.stdout.take().unwrap()),
            child,
        })
    }

    fn send(&mut self, line: &str) -> Result<(), String> {
        let w = self.stdin.as_mut().unwrap();
        writeln!(w, "{line}").and_then(|_| w.flush()).map_err(|e| e.to_string())
    }

    fn recv(&mut self) -> Result<String, String> {
        let mut line = String::new();
        self.stdout.read_line(&mut line).map_err(|e| e.to_string())?;
        ensure(line.ends_with('\n'), || "server closed stdout".into())?;
        Ok(line.trim_end().to_string())
    }

    fn request(&mut self, msg: &Value) -> Result<Value, String> {
        self.send(&msg.to_string())?;
        serde_json::from_str(&self.recv()?).map_err(|e| e.to_string())
    }
}

impl Drop for McpChild {
    fn drop(&mut self) {
        self.stdin.take();
        if self.child.wait().is_err() {
            let _ = self.child.kill();
        }
    }
}

const MCP_KEY: &str = "team-key";

fn mcp_backend() -> Result<BackgroundServer, String> {
    let store = Store::open_in_memory(Arc::new(TrigramEmbedder::default())).map_err(|e| e.to_string())?;
    store
        .register_team(&TeamId::new("team").unwrap(), MCP_KEY)
        .map_err(|e| e.to_string())?;
    BackgroundServer::start(Arc::new(store), None).map_err(|e| e.to_string())
}

fn normalize(text: &str) -> String {
    let uuid = Regex::new(r"[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}").unwrap();
    let ts = Regex::new(r"\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}\.\d{6}Z").unwrap();
    let text = uuid.replace_all(text, |c: &regex::Captures| {
        if &c[0] == "00000000-0000-0000-0000-000000000000" {
            c[0].to_string()
        } else {
            "<uuid>".to_string()
        }
    });
    ts.replace_all(&text, "<ts>").into_owned()
}

fn call(id: i64, name: &str, args: Value) -> Value {
    json!({"jsonrpc": "2.0", "id": id, "method": "tools/call", "params": {"name": name, "arguments": args}})
}

/// Strips server-assigned journal ids and every timestamp.
fn comparable(export: &TeamExport) -> Value {
    let mut v = serde_json::to_value(export).unwrap();
    for post in v["posts"].as_array_mut().unwrap() {
        post.as_object_mut().unwrap().remove("created_at");
    }
    for entry in v["journal"].as_array_mut().unwrap() {
        let obj = entry.as_object_mut().unwrap();
        obj.remove("created_at");
        obj.remove("id");
    }
    v
}

fn mcp_conformance() -> Outcome {
    let social = ["login", "read_posts", "create_post"];
    let journal = ["process_thoughts", "search_journal", "read_entry", "list_recent"];
    let combined: Vec<&str> = social.iter().chain(&journal).copied().collect();
    let mut golden_lines = 0;
    for (mode, names) in [
        ("social", social.to_vec()),
        ("journal", journal.to_vec()),
        ("combined", combined),
    ] {
        let backend = mcp_backend()?;
        let mut child = McpChild::spawn(mode, &backend.url(), MCP_KEY)?;

        // Golden transcript replayed through the binary.
        let golden_path = workspace_dir().join(format!("mcp/tests/golden/{mode}.txt"));
        let golden = std::fs::read_to_string(&golden_path).map_err(|e| format!("{}: {e}", golden_path.display()))?;
        for (i, line) in golden.lines().enumerate() {
            if let Some(sent) = line.strip_prefix("> ") {
                child.send(sent)?;
            } else if let Some(want) = line.strip_prefix("< ") {
                let got = normalize(&child.recv()?);
                ensure(got == want, || format!("{mode} golden line {}: got {got}", i + 1))?;
                golden_lines += 1;
            }
        }

        let r = child.request(&json!({"jsonrpc": "2.0", "id": 100, "method": "tools/list"}))?;
        let got: Vec<&str> = r["result"]["tools"]
            .as_array()
            .ok_or("tools/list returned no tools")?
            .iter()
            .filter_map(|t| t["name"].as_str())
            .collect();
        ensure(got == names, || format!("{mode}: tools/list returned {got:?}"))?;

        for (msg, code) in [
            (json!({"id": 101, "method": "tools/list"}), -32600),
            (json!({"jsonrpc": "1.0", "id": 102, "method": "tools/list"}), -32600),
            (
                json!({"jsonrpc": "2.0", "id": 103, "method": "resources/delete"}),
                -32601,
            ),
            (call(104, "no_such_tool", json!({})), -32602),
            (
                json!({"jsonrpc": "2.0", "id": 105, "method": "tools/call", "params": {"arguments": {}}}),
                -32602,
            ),
            (call(106, names[0], json!("not an object")), -32602),
        ] {
            let r = child.request(&msg)?;
            ensure(r["error"]["code"] == code && r["id"] == msg["id"], || {
                format!("{mode}: {msg} answered {r}")
            })?;
        }
    }

    // Store state after tool calls equals the state after the same writes
    // made directly over HTTP.
    let via_mcp = mcp_backend()?;
    let direct = mcp_backend()?;
    {
        let mut child = McpChild::spawn("combined", &via_mcp.url(), MCP_KEY)?;
        child.request(&json!({"jsonrpc": "2.0", "id": 1, "method": "initialize", "params": {"protocolVersion": "2025-06-18", "capabilities": {}, "clientInfo": {"name": "acceptance", "version": "0"}}}))?;
        child.send(&json!({"jsonrpc": "2.0", "method": "notifications/initialized"}).to_string())?;
        for c in [
            call(2, "login", json!({"agent_name": "agent-7"})),
            call(
                3,
                "create_post",
                json!({"body": "two-bucket: fill the larger first", "tags": ["Two Bucket", "tip"]}),
            ),
            call(
                4,
                "process_thoughts",
                json!({"technical_insights": "BFS over (a, b) states.", "notes": "Quick one."}),
            ),
            call(5, "create_post", json!({"body": "react cells done"})),
            call(
                6,
                "process_thoughts",
                json!({"debugging_notes": "Callbacks fired twice."}),
            ),
        ] {
            let r = child.request(&c)?;
            ensure(r["result"]["isError"] == false, || format!("{c} answered {r}"))?;
        }
    }
    let agent = http();
    let url = direct.url();
    for (path, body) in [
        (
            "/api/v1/posts",
            json!({"author": "agent-7", "body": "two-bucket: fill the larger first", "tags": ["Two Bucket", "tip"]}),
        ),
        (
            "/api/v1/journal",
            json!({"sections": {"technical-insights": "BFS over (a, b) states.", "reflective-observations": "Quick one."}}),
        ),
        (
            "/api/v1/posts",
            json!({"author": "agent-7", "body": "react cells done"}),
        ),
        (
            "/api/v1/journal",
            json!({"sections": {"debugging-notes": "Callbacks fired twice."}}),
        ),
    ] {
        let (s, v) = post(&agent, &format!("{url}{path}"), MCP_KEY, &body)?;
        ensure(s == 201, || format!("direct {path}: {s} {v}"))?;
    }
    let team = TeamId::new("team").unwrap();
    let a = comparable(&via_mcp.store().export(&team).map_err(|e| e.to_string())?);
    let b = comparable(&direct.store().export(&team).map_err(|e| e.to_string())?);
    ensure(a == b, || format!("stores differ:\nmcp    {a}\ndirect {b}"))?;
    Ok(format!(
        "3 modes, {golden_lines} golden replies, 18 error envelopes, store equals direct HTTP"
    ))
}

/// Full sort then linear interpolation at rank p/100 * (n-1).
fn oracle_percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = p / 100.0 * (v.len() as f64 - 1.0);
    let below = idx.floor();
    let weight = idx - below;
    let i = below as usize;
    if i + 1 < v.len() {
        v[i] * (1.0 - weight) + v[i + 1] * weight
    } else {
        v[i]
    }
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300)
}

fn baseline_record(problem: &str, cost: f64) -> RunRecord {
    RunRecord {
        problem_id: problem.into(),
        model_label: "m".into(),
        variant: Variant::Baseline,
        phase: Phase::None,
        repetition: 1,
        attempt: 0,
        cost_usd: cost,
        turns: 10,
        wall_time_s: 30.0,
        tokens: TokenCounts::new(10, 100, 1_000, 10_000),
        tests_passed: 1,
        tests_total: 1,
        completed: true,
        tool_events: vec![],
        status: RunStatus::Ok,
    }
}

fn statistics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1_000);
    for trial in 0..1_000 {
        let n = rng.random_range(1..500);
        let scale = 10f64.powi(rng.random_range(-3..6));
        let values: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * scale).collect();
        let s = summarize(&values).map_err(|e| e.to_string())?;
        let mean = values.iter().sum::<f64>() / n as f64;
        ensure(s.n == n && rel_close(s.mean, mean), || {
            format!("trial {trial}: mean {} vs {mean}", s.mean)
        })?;
        for (got, p) in [(s.median, 50.0), (s.p90, 90.0), (s.p95, 95.0), (s.p99, 99.0)] {
            let want = oracle_percentile(&values, p);
            ensure(rel_close(got, want), || format!("trial {trial} p{p}: {got} vs {want}"))?;
        }
    }

    // Hand-computed: mean 2.8, population sigma 3.6, threshold 2.8 + 0.5 * 3.6 = 4.6.
    let fixture: Vec<RunRecord> = [1.0, 1.0, 1.0, 1.0, 10.0]
        .iter()
        .enumerate()
        .map(|(i, c)| baseline_record(&format!("p{}", i + 1), *c))
        .collect();
    let hard = select_hard_questions(&fixture, 0.5, SigmaKind::Population).map_err(|e| e.to_string())?;
    ensure(
        (hard.mu - 2.8).abs() < 1e-12 && (hard.sigma - 3.6).abs() < 1e-12 && (hard.threshold - 4.6).abs() < 1e-12,
        || {
            format!(
                "fixture gave mu {} sigma {} threshold {}",
                hard.mu, hard.sigma, hard.threshold
            )
        },
    )?;
    ensure(hard.members == ["p5"], || {
        format!("fixture selected {:?}", hard.members)
    })?;

    for _ in 0..200 {
        let n = rng.random_range(2..40);
        let records: Vec<RunRecord> = (0..n * 2)
            .map(|i| baseline_record(&format!("q{:02}", i % n), rng.random_range(0.05..3.0)))
            .collect();
        let c = rng.random_range(0.01..100.0);
        let scaled: Vec<RunRecord> = records
            .iter()
            .map(|r| RunRecord {
                cost_usd: r.cost_usd * c,
                ..r.clone()
            })
            .collect();
        let k = rng.random_range(0.0..2.0);
        for kind in [SigmaKind::Population, SigmaKind::Sample] {
            let a = select_hard_questions(&records, k, kind).map_err(|e| e.to_string())?;
            let b = select_hard_questions(&scaled, k, kind).map_err(|e| e.to_string())?;
            ensure(a.members == b.members, || {
                format!("scaling by {c} changed the hard set")
            })?;
            ensure(
                rel_close(b.threshold, a.threshold * c) || (b.threshold - a.threshold * c).abs() < 1e-12,
                || format!("threshold {} scaled by {c} gave {}", a.threshold, b.threshold),
            )?;
        }
    }
    Ok("1000 vectors within 1e-9, fixture threshold 4.6, 200 scalings equivariant".into())
}

fn events(tool: ToolKind, action: ToolAction, n: usize, after: bool) -> Vec<ToolEvent> {
    (0..n)
        .map(|i| ToolEvent {
            timestamp: Utc.timestamp_opt(i as i64, 0).unwrap(),
            tool,
            action,
            after_completion: after,
        })
        .collect()
}

fn log_with(problem: &str, tool_events: Vec<ToolEvent>) -> RunLog {
    let mut record = baseline_record(problem, 0.3);
    record.variant = Variant::JournalSocial;
    record.phase = Phase::Empty;
    record.tool_events = tool_events;
    RunLog {
        record,
        team_id: None,
        prompt: Default::default(),
        completion_at: Some(Utc.timestamp_opt(10_000, 0).unwrap()),
        transcript: vec![],
    }
}

fn behavior_ratios() -> Outcome {
    // 1,142 journal writes against 122 retrievals; 1,091 social writes
    // against 600 reads.
    let counts = vec![log_with(
        "bulk",
        [
            events(ToolKind::Journal, ToolAction::Write, 1_142, false),
            events(ToolKind::Journal, ToolAction::Search, 70, false),
            events(ToolKind::Journal, ToolAction::Read, 52, false),
            events(ToolKind::Social, ToolAction::Write, 1_091, false),
            events(ToolKind::Social, ToolAction::Read, 600, false),
        ]
        .concat(),
    )];
    let s = behavior_summary(&counts);
    let (journal, social) = (format_ratio(s.journal_ratio()), format_ratio(s.social_ratio()));
    ensure(journal == "9.4" && social == "1.8", || {
        format!("ratios {journal} and {social}")
    })?;

    // 50 celebratory runs, 43 pure; pre-completion and tool-free runs must
    // not enter the denominator.
    let mut logs = Vec::new();
    for i in 0..43 {
        logs.push(log_with(
            &format!("pure{i}"),
            events(ToolKind::Social, ToolAction::Write, 1 + i % 3, true),
        ));
    }
    for i in 0..7 {
        let mixed = [
            events(ToolKind::Journal, ToolAction::Write, 2, false),
            events(ToolKind::Social, ToolAction::Write, 1, true),
        ]
        .concat();
        logs.push(log_with(&format!("mixed{i}"), mixed));
    }
    for i in 0..12 {
        logs.push(log_with(
            &format!("pre{i}"),
            events(ToolKind::Journal, ToolAction::Search, 1, false),
        ));
    }
    for i in 0..5 {
        logs.push(log_with(&format!("none{i}"), vec![]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(86);
    logs.shuffle(&mut rng);
    for log in &logs {
        let class = classify_celebratory(log).map_err(|e| e.to_string())?;
        let id = &log.record.problem_id;
        let want = match id.trim_end_matches(|c: char| c.is_ascii_digit()) {
            "pure" => CelebratoryClass::PurePostCompletion,
            "mixed" => CelebratoryClass::Mixed,
            "pre" => CelebratoryClass::PreCompletion,
            _ => CelebratoryClass::None,
        };
        ensure(class == want, || format!("{id} classified {class:?}"))?;
    }
    let s = behavior_summary(&logs);
    ensure(s.celebratory_rate() == Some(0.86), || {
        format!("celebratory rate {:?}", s.celebratory_rate())
    })?;
    Ok(format!("journal {journal}, social {social}, celebratory 86% (43/50)"))
}

/// A `botboard` server process over a database file.
struct ServerProcess {
    child: Child,
    url: String,
}

impl ServerProcess {
    fn start(db: &Path, team_key: &str) -> Result<Self, String> {
        let mut child = Command::new(env!("CARGO_BIN_EXE_botboard"))
            .arg("--db")
            .arg(db)
            .args(["--listen", "127.0.0.1:0", "--team", &format!("durable={team_key}")])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| e.to_string())?;
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .map_err(|e| e.to_string())?;
        let url = line
            .trim()
            .strip_prefix("listening on ")
            .ok_or_else(|| format!("unexpected startup line {line:?}"))?
            .to_string();
        Ok(Self { child, url })
    }
}

impl Drop for ServerProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[derive(Debug, Clone)]
enum Acked {
    Post {
        id: String,
        body: String,
        tags: Vec<String>,
    },
    Entry {
        id: String,
        sections: BTreeMap<String, String>,
    },
}

fn durability() -> Outcome {
    const KEY: &str = "durable-key";
    const WRITES: usize = 500;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let db = dir.path().join("botboard.sqlite");
    let mut server = ServerProcess::start(&db, KEY)?;
    let agent = http();

    let acked = Arc::new(Mutex::new(Vec::<Acked>::new()));
    let issued = Arc::new(AtomicUsize::new(0));
    let stop = Arc::new(AtomicBool::new(false));
    let writers: Vec<_> = (0..3u64)
        .map(|w| {
            let (agent, url, acked, issued, stop) = (
                agent.clone(),
                server.url.clone(),
                acked.clone(),
                issued.clone(),
                stop.clone(),
            );
            std::thread::spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(w);
                while !stop.load(Ordering::SeqCst) && issued.fetch_add(1, Ordering::SeqCst) < WRITES {
                    let n: u32 = rng.random();
                    if rng.random_bool(0.5) {
                        let body = format!("post {w}-{n:08x}");
                        let tags = vec![format!("t{}", n % 7)];
                        let req = json!({"author": format!("writer-{w}"), "body": body, "tags": tags});
                        match post(&agent, &format!("{url}/api/v1/posts"), KEY, &req) {
                            Ok((201, v)) => acked.lock().unwrap().push(Acked::Post {
                                id: v["id"].as_str().unwrap_or_default().to_string(),
                                body,
                                tags,
                            }),
                            _ => break,
                        }
                    } else {
                        let mut sections = BTreeMap::new();
                        sections.insert("technical-insights".to_string(), format!("insight {w} {n}"));
                        if n.is_multiple_of(2) {
                            sections.insert("debugging-notes".to_string(), format!("debug {n:x}"));
                        }
                        match post(
                            &agent,
                            &format!("{url}/api/v1/journal"),
                            KEY,
                            &json!({"sections": sections}),
                        ) {
                            Ok((201, v)) => acked.lock().unwrap().push(Acked::Entry {
                                id: v["id"].as_str().unwrap_or_default().to_string(),
                                sections,
                            }),
                            _ => break,
                        }
                    }
                }
            })
        })
        .collect();

    // Kill without warning part-way through the last writes, so some requests
    // are in flight.
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let kill_after = rng.random_range(WRITES * 4 / 5..WRITES - 10);
    let deadline = Instant::now() + Duration::from_secs(40);
    while acked.lock().unwrap().len() < kill_after {
        ensure(Instant::now() < deadline, || "writers stalled".into())?;
        std::thread::sleep(Duration::from_millis(1));
    }
    server.child.kill().map_err(|e| e.to_string())?;
    server.child.wait().map_err(|e| e.to_string())?;
    stop.store(true, Ordering::SeqCst);
    for w in writers {
        w.join().map_err(|_| "writer panicked".to_string())?;
    }
    drop(server);

    let server = ServerProcess::start(&db, KEY)?;
    let (status, v) = get(&agent, &format!("{}/api/v1/export", server.url), KEY)?;
    ensure(status == 200, || format!("export after restart: {status}"))?;
    let export: TeamExport = serde_json::from_value(v).map_err(|e| e.to_string())?;
    let posts: HashMap<&str, _> = export.posts.iter().map(|p| (p.id.as_str(), p)).collect();
    let entries: HashMap<&str, _> = export.journal.iter().map(|e| (e.id.as_str(), e)).collect();
    let acked = acked.lock().unwrap();
    let mut lost = Vec::new();
    for a in acked.iter() {
        let kept = match a {
            Acked::Post { id, body, tags } => posts
                .get(id.as_str())
                .is_some_and(|p| &p.body == body && &p.tags == tags),
            Acked::Entry { id, sections } => entries.get(id.as_str()).is_some_and(|e| &e.sections == sections),
        };
        if !kept {
            lost.push(a.clone());
        }
    }
    ensure(lost.is_empty(), || {
        format!(
            "{} of {} acknowledged writes lost, first {:?}",
            lost.len(),
            acked.len(),
            lost[0]
        )
    })?;
    Ok(format!(
        "killed after {} acknowledged writes, all {} recovered ({} rows after restart)",
        acked.len(),
        acked.len(),
        posts.len() + entries.len()
    ))
}

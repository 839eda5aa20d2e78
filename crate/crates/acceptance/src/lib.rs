//! Acceptance checks for the research copilot, one per primary criterion.
//!
//! Every check returns a verdict with a short detail line. Computed values are
//! compared against independent oracles where one exists.

pub mod scenario;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use copilot_core::artifacts::ArtifactStore;
use copilot_core::evaluation::{gate, GateDecision};
use copilot_core::lake::{cosine_similarity, text_embedding, DataLake, DEFAULT_DISPLAY_ROWS};
use copilot_core::llm::{ChatMessage, Role};
use copilot_core::orchestrator::{
    assemble_context, Agent, BudgetChange, EventBody, EventKind, Limits, SessionEvent,
    SessionState, TurnOutcome,
};
use copilot_core::rag::{retrieve, Corpus, CorpusChunk, Filters, LiteratureQuery, SectionLabel};
use copilot_core::scientometrics::{
    disruption_for_focal, disruption_from_counts, pearson_correlation, percent_change,
    CitationGraph, PaperId,
};
use copilot_core::tags::{parse_segments, SegmentKind};

use scenario::{
    case1_script, echo_registry, full_registry, run, single_step_script, CASE1_QUESTION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// A statement of scope rather than a measurement.
    Stated,
}

#[derive(Debug, Clone)]
pub struct Criterion {
    pub name: &'static str,
    pub verdict: Verdict,
    pub detail: String,
}

impl Criterion {
    pub fn ok(&self) -> bool {
        self.verdict != Verdict::Fail
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Stated => "NOTE",
        };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

type Check = fn(&Path) -> Result<String, String>;

const CHECKS: [(&str, Check); 9] = [
    ("disruption ground truth", disruption_ground_truth),
    ("disruption oracle equivalence", disruption_oracle),
    ("correlation fixtures", correlation_fixtures),
    ("reward gate parity", reward_gate),
    ("orchestration replay", orchestration_replay),
    ("context-memory invariants", context_memory),
    ("data-lake conformance", data_lake),
    ("rag ranking", rag_ranking),
    ("budget enforcement", budget_enforcement),
];

pub const DESK_SCALE: &str = "not reproducible at desk scale: case-study numbers that need the complete \
data lake (Harvard's 12,565 collaboration weight, per-team-size means over 9.16 M rows) and the human \
versus system timing and rating study are replaced by the fixture and property checks above";

/// Runs every check against the repository rooted at `root`.
pub fn run_all(root: &Path) -> Vec<Criterion> {
    let mut out: Vec<Criterion> = CHECKS
        .iter()
        .map(|(name, check)| {
            let (verdict, detail) = match check(root) {
                Ok(d) => (Verdict::Pass, d),
                Err(d) => (Verdict::Fail, d),
            };
            Criterion {
                name,
                verdict,
                detail,
            }
        })
        .collect();
    out.push(Criterion {
        name: "desk scale",
        verdict: Verdict::Stated,
        detail: DESK_SCALE.into(),
    });
    out
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(started: Instant, limit_s: f64) -> Result<f64, String> {
    let took = started.elapsed().as_secs_f64();
    ensure(took < limit_s, || {
        format!("took {took:.2}s, limit {limit_s}s")
    })?;
    Ok(took)
}

fn disruption_ground_truth(_: &Path) -> Result<String, String> {
    let started = Instant::now();
    let rows = [
        ((95, 15, 55), 0.484848),
        ((53, 7, 30), 0.511111),
        ((8, 0, 22), 0.266667),
        ((54, 36, 83), 0.104046),
    ];
    for ((i, j, k), want) in rows {
        let got = disruption_from_counts(i, j, k)
            .score
            .ok_or("score missing")?;
        ensure((got - want).abs() <= 1e-6, || {
            format!("({i},{j},{k}) gave {got}, expected {want}")
        })?;
    }
    let took = within_time(started, 1.0)?;
    Ok(format!("4 rows within 1e-6 in {took:.3}s"))
}

/// Classifies each later paper straight from the edge list.
fn brute_force_counts(
    years: &[i64],
    edges: &BTreeSet<(usize, usize)>,
    focal: usize,
    refs: &BTreeSet<usize>,
    cutoff: i64,
) -> (u64, u64, u64) {
    let (mut n_i, mut n_j, mut n_k) = (0, 0, 0);
    for (p, &year) in years.iter().enumerate() {
        if p == focal || year <= cutoff {
            continue;
        }
        let f = edges.contains(&(p, focal));
        let r = refs.iter().any(|x| edges.contains(&(p, *x)));
        match (f, r) {
            (true, false) => n_i += 1,
            (true, true) => n_j += 1,
            (false, true) => n_k += 1,
            (false, false) => {}
        }
    }
    (n_i, n_j, n_k)
}

fn disruption_oracle(_: &Path) -> Result<String, String> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for case in 0..500 {
        let n = rng.random_range(2..=50usize);
        let years: Vec<i64> = (0..n).map(|_| rng.random_range(1990..2010)).collect();
        let mut edges = BTreeSet::new();
        for _ in 0..rng.random_range(0..=n * 4) {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            if a != b {
                edges.insert((a, b));
            }
        }
        let focal = rng.random_range(0..n);
        let refs: BTreeSet<usize> = if rng.random_bool(0.5) {
            edges
                .iter()
                .filter(|(a, _)| *a == focal)
                .map(|(_, b)| *b)
                .collect()
        } else {
            (0..rng.random_range(0..=n / 2))
                .map(|_| rng.random_range(0..n))
                .filter(|r| *r != focal)
                .collect()
        };
        let cutoff = rng.random_range(1988..2010);

        let mut g = CitationGraph::new();
        for (i, y) in years.iter().enumerate() {
            g.add_paper(i as PaperId, *y);
        }
        for (a, b) in &edges {
            g.add_citation(*a as PaperId, *b as PaperId)
                .map_err(|e| e.to_string())?;
        }
        let ids: BTreeSet<PaperId> = refs.iter().map(|r| *r as PaperId).collect();
        let got =
            disruption_for_focal(&g, focal as PaperId, &ids, cutoff).map_err(|e| e.to_string())?;
        let (n_i, n_j, n_k) = brute_force_counts(&years, &edges, focal, &refs, cutoff);
        let total = n_i + n_j + n_k;
        let score = (total > 0).then(|| (n_i as f64 - n_j as f64) / total as f64);
        ensure(
            (got.n_i, got.n_j, got.n_k) == (n_i, n_j, n_k) && got.score == score,
            || format!("graph {case}: got {got:?}, oracle ({n_i},{n_j},{n_k})"),
        )?;
    }
    let took = within_time(started, 30.0)?;
    Ok(format!(
        "500 random graphs equal the brute-force classifier in {took:.2}s"
    ))
}

/// Mean disruption by team size 1..=10.
pub const TEAM_DISRUPTION: [f64; 10] = [
    56.098700, 48.618542, 47.145945, 45.950665, 44.964650, 44.105816, 43.679090, 43.392148,
    43.018289, 42.710667,
];

/// Mean citations by team size 1..=10.
pub const TEAM_CITATIONS: [f64; 10] = [
    20.453189, 36.634414, 36.267423, 36.153230, 36.069241, 36.977249, 38.810713, 39.196685,
    40.828852, 41.677381,
];

fn correlation_fixtures(_: &Path) -> Result<String, String> {
    let x: Vec<f64> = (1..=10).map(f64::from).collect();
    let rd = pearson_correlation(&x, &TEAM_DISRUPTION).map_err(|e| e.to_string())?;
    let rc = pearson_correlation(&x, &TEAM_CITATIONS).map_err(|e| e.to_string())?;
    let pd = percent_change(TEAM_DISRUPTION[0], TEAM_DISRUPTION[9]).map_err(|e| e.to_string())?;
    let pc = percent_change(TEAM_CITATIONS[0], TEAM_CITATIONS[9]).map_err(|e| e.to_string())?;
    ensure((rd + 0.846).abs() <= 0.001, || {
        format!("disruption r = {rd}")
    })?;
    ensure((rc - 0.755).abs() <= 0.001, || format!("citation r = {rc}"))?;
    ensure((pd + 23.9).abs() <= 0.05, || {
        format!("disruption change = {pd}")
    })?;
    ensure((pc - 103.8).abs() <= 0.05, || {
        format!("citation change = {pc}")
    })?;
    Ok(format!(
        "r = {rd:.4} / {rc:.4}, change = {pd:.2}% / {pc:.2}%"
    ))
}

fn reward_gate(root: &Path) -> Result<String, String> {
    let expected = [
        (0.85, GateDecision::Continue),
        (0.75, GateDecision::Adjust),
        (0.4, GateDecision::Backtrack),
        (0.8, GateDecision::Continue),
        (0.7999, GateDecision::Adjust),
        (0.5, GateDecision::Adjust),
        (0.4999, GateDecision::Backtrack),
    ];
    for (r, want) in expected {
        let got = gate(r).map_err(|e| e.to_string())?;
        ensure(got == want, || {
            format!("gate({r}) = {got:?}, expected {want:?}")
        })?;
    }
    ensure(gate(1.5).is_err() && gate(-0.1).is_err(), || {
        "out-of-range reward accepted".into()
    })?;

    let out = run(
        &full_registry(root)?,
        case1_script(root)?,
        &[CASE1_QUESTION],
        Limits::default(),
    )?;
    let visual: Vec<(usize, f64)> = out
        .events
        .iter()
        .enumerate()
        .filter_map(|(i, e)| match &e.body {
            EventBody::Evaluation { record, .. } if record.figure.is_some() => {
                record.reward.map(|r| (i, r))
            }
            _ => None,
        })
        .collect();
    let rewards: Vec<f64> = visual.iter().map(|v| v.1).collect();
    ensure(rewards == [0.75, 0.85], || {
        format!("visual rewards {rewards:?}")
    })?;
    let revisions = out.events[visual[0].0..visual[1].0]
        .iter()
        .filter(|e| matches!(&e.body, EventBody::AgentMessage { tool_calls, .. } if !tool_calls.is_empty()))
        .count();
    ensure(revisions == 1, || {
        format!("{revisions} revision turns between 0.75 and 0.85")
    })?;
    Ok("boundaries hold; case1 revises the figure once between 0.75 and 0.85".into())
}

fn orchestration_replay(root: &Path) -> Result<String, String> {
    let registry = full_registry(root)?;
    let started = Instant::now();
    let a = run(
        &registry,
        case1_script(root)?,
        &[CASE1_QUESTION],
        Limits::default(),
    )?;
    let b = run(
        &registry,
        case1_script(root)?,
        &[CASE1_QUESTION],
        Limits::default(),
    )?;
    let took = within_time(started, 5.0)?;
    let golden_text = std::fs::read_to_string(root.join("fixtures/golden/case1_event_kinds.json"))
        .map_err(|e| e.to_string())?;
    let golden: Vec<String> = serde_json::from_str(&golden_text).map_err(|e| e.to_string())?;
    let kinds: Vec<&str> = a.events.iter().map(|e| e.kind().as_str()).collect();
    ensure(kinds == golden, || format!("event kinds {kinds:?}"))?;
    let log = |r: &scenario::Run| {
        r.events
            .iter()
            .map(SessionEvent::canonical_json)
            .collect::<Vec<_>>()
            .join("\n")
    };
    ensure(log(&a) == log(&b), || "two replays differ".into())?;
    ensure(
        matches!(a.outcomes.as_slice(), [TurnOutcome::Answered(_)]),
        || format!("{:?}", a.outcomes),
    )?;
    Ok(format!(
        "{} events match golden; replays byte-identical; {took:.2}s",
        a.events.len()
    ))
}

fn thinking_segments(text: &str) -> usize {
    parse_segments(text)
        .iter()
        .filter(|s| s.kind == SegmentKind::Thinking)
        .count()
}

/// The three memory rules over one state. Returns the number of contexts checked.
fn check_contexts(state: &SessionState) -> Result<usize, String> {
    let mut checked = 1;
    let manager =
        assemble_context(state, Agent::ResearchManager, None).map_err(|e| e.to_string())?;
    let evaluated: BTreeMap<&str, &str> = state
        .figures
        .iter()
        .map(|(k, v)| (k.as_str(), v.caption.as_str()))
        .collect();
    let scan = |m: &ChatMessage| -> Result<(), String> {
        ensure(!m.has_image(), || {
            "raw image in an assembled context".into()
        })?;
        let text = m.text();
        for (name, caption) in &evaluated {
            ensure(!text.contains(&format!("[image: {name}]")), || {
                format!("{name} not replaced")
            })?;
            if text.contains(&format!("[figure {name}]")) {
                ensure(text.contains(caption), || {
                    format!("{name} stand-in without caption")
                })?;
            }
        }
        Ok(())
    };
    for (m, author) in manager.messages.iter().zip(&manager.authors) {
        scan(m)?;
        if author.is_specialist() || *author == Agent::EvaluationSpecialist {
            ensure(thinking_segments(&m.text()) == 0, || {
                format!("{author} thinking in the manager context")
            })?;
        }
    }
    for task in &state.tasks {
        let ctx =
            assemble_context(state, task.role, Some(task.task_id)).map_err(|e| e.to_string())?;
        checked += 1;
        for (m, author) in ctx.messages.iter().zip(&ctx.authors) {
            scan(m)?;
            ensure(!author.is_specialist() || *author == task.role, || {
                format!("{author} content in the {} context", task.role)
            })?;
            if m.role == Role::Tool || m.role == Role::Assistant {
                ensure(*author == task.role, || {
                    format!("{author} message in the {} transcript", task.role)
                })?;
            }
        }
    }
    Ok(checked)
}

fn context_memory(root: &Path) -> Result<String, String> {
    let registry = full_registry(root)?;
    let mut sessions = vec![run(
        &registry,
        case1_script(root)?,
        &[CASE1_QUESTION],
        Limits::default(),
    )?];
    sessions.push(run(
        &echo_registry(),
        single_step_script(21, &[], 20),
        &["q"],
        Limits::default(),
    )?);
    let (mut states, mut contexts) = (0, 0);
    for s in &sessions {
        for n in 0..=s.events.len() {
            let state = SessionState::replay(&s.events[..n]).map_err(|e| e.to_string())?;
            contexts += check_contexts(&state)?;
            states += 1;
        }
    }
    let case1 = &sessions[0];
    let image_requests = case1
        .requests
        .iter()
        .filter(|r| r.iter().any(ChatMessage::has_image))
        .count();
    ensure(image_requests == 2, || {
        format!("{image_requests} provider requests carried pixels")
    })?;
    ensure(case1.state.figures.len() == 2, || {
        "figures missing stand-ins".into()
    })?;
    Ok(format!("{contexts} contexts over {states} replayed prefixes; pixels only in the 2 visual evaluations"))
}

fn data_lake(root: &Path) -> Result<String, String> {
    let lake = DataLake::load_fixture(root.join("fixtures/lake")).map_err(|e| e.to_string())?;
    let listed = lake.list_tables();
    ensure(listed.len() == 19, || format!("{} tables", listed.len()))?;
    let reference = std::fs::read_to_string(root.join("fixtures/lake/table_descriptions.tsv"))
        .map_err(|e| e.to_string())?;
    let expected: Vec<(&str, &str)> = reference
        .lines()
        .filter_map(|l| l.split_once('\t'))
        .collect();
    ensure(listed == expected, || {
        "table descriptions differ from the reference".into()
    })?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = ArtifactStore::open(dir.path()).map_err(|e| e.to_string())?;
    for sql in [
        "SELECT * FROM papers ORDER BY paper_id",
        "SELECT paper_id, year FROM papers WHERE year > 2015 ORDER BY paper_id LIMIT 4",
        "SELECT COUNT(*) AS n FROM authors",
        "SELECT * FROM papers WHERE 0",
    ] {
        let r = lake
            .run_query(sql, DEFAULT_DISPLAY_ROWS, &store)
            .map_err(|e| e.to_string())?;
        let mut reader =
            csv::Reader::from_path(store.path(&r.artifact)).map_err(|e| e.to_string())?;
        let rows: Vec<Vec<String>> = reader
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        ensure(r.preview.len() <= DEFAULT_DISPLAY_ROWS, || {
            format!("{sql}: preview of {}", r.preview.len())
        })?;
        ensure(
            rows.len() == r.total_rows && rows[..r.preview.len()] == r.preview[..],
            || format!("{sql}: preview is not a prefix of the artifact"),
        )?;
    }
    let harvard = lake
        .name_search("institution_name", "Harvard University")
        .map_err(|e| e.to_string())?;
    let physics = lake
        .name_search("field_name", "Physics")
        .map_err(|e| e.to_string())?;
    ensure(
        harvard.first().map(|m| m.entity_id) == Some(136199984),
        || "Harvard is not ranked first".into(),
    )?;
    ensure(
        physics.first().map(|m| m.entity_id) == Some(121332964),
        || "Physics is not ranked first".into(),
    )?;
    Ok(
        "19 tables with reference descriptions; previews are artifact prefixes; names resolve"
            .into(),
    )
}

/// Exhaustive ranking with a selection sort, kept apart from the library.
fn brute_force_rank(
    chunks: &[CorpusChunk],
    f: &Filters,
    q: &[f64],
    k: usize,
) -> Vec<(String, f64)> {
    let mut pool: Vec<(String, f64)> = chunks
        .iter()
        .filter(|c| {
            f.year.is_none_or(|y| y == c.year)
                && (f.section == SectionLabel::All || f.section == c.section)
                && f.author.as_ref().is_none_or(|a| {
                    c.authors
                        .iter()
                        .any(|n| n.to_lowercase().contains(&a.to_lowercase()))
                })
                && f.title
                    .as_ref()
                    .is_none_or(|t| c.paper_title.to_lowercase().contains(&t.to_lowercase()))
        })
        .map(|c| (c.chunk_id.clone(), cosine_similarity(q, &c.embedding)))
        .collect();
    let mut out = Vec::new();
    while out.len() < k && !pool.is_empty() {
        let mut best = 0;
        for i in 1..pool.len() {
            if pool[i].1 > pool[best].1 || (pool[i].1 == pool[best].1 && pool[i].0 < pool[best].0) {
                best = i;
            }
        }
        out.push(pool.remove(best));
    }
    out
}

const WORDS: [&str; 16] = [
    "team",
    "size",
    "disruption",
    "citation",
    "gender",
    "funding",
    "patent",
    "network",
    "novelty",
    "impact",
    "collaboration",
    "science",
    "policy",
    "career",
    "mobility",
    "evidence",
];

fn rag_ranking(root: &Path) -> Result<String, String> {
    let corpus =
        Corpus::load(&root.join("fixtures/corpus/documents.json")).map_err(|e| e.to_string())?;
    ensure(corpus.len() == 100, || format!("{} chunks", corpus.len()))?;
    let started = Instant::now();
    let hits_of = |q: &LiteratureQuery| -> Result<Vec<(String, f64)>, String> {
        Ok(retrieve(&corpus, q, None)
            .map_err(|e| e.to_string())?
            .hits
            .iter()
            .map(|h| (h.chunk.chunk_id.clone(), h.similarity))
            .collect())
    };
    for query in [
        "small teams disrupt science",
        "gender gaps in authorship",
        "patents and innovation",
    ] {
        for section in SectionLabel::LABELS {
            let q = LiteratureQuery::new(query).section(section);
            let want = brute_force_rank(corpus.chunks(), &q.filters, &text_embedding(query), q.k);
            ensure(hits_of(&q)? == want, || {
                format!("{query} / {section:?} differs from brute force")
            })?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let authors = ["a", "Gomez", "ben", "zz", "lena"];
    let titles = ["team", "Citation", "evidence 1", "and", "none"];
    for i in 0..200 {
        let words = rng.random_range(1..=5);
        let query: Vec<&str> = (0..words)
            .map(|_| WORDS[rng.random_range(0..WORDS.len())])
            .collect();
        let filters = Filters {
            year: rng.random_bool(0.3).then(|| rng.random_range(2003..2025)),
            author: rng
                .random_bool(0.3)
                .then(|| authors[rng.random_range(0..authors.len())].to_string()),
            section: SectionLabel::LABELS[rng.random_range(0..SectionLabel::LABELS.len())],
            title: rng
                .random_bool(0.3)
                .then(|| titles[rng.random_range(0..titles.len())].to_string()),
        };
        let q = LiteratureQuery {
            query: query.join(" "),
            k: rng.random_range(1..25),
            filters: filters.clone(),
        };
        let got = retrieve(&corpus, &q, None).map_err(|e| e.to_string())?.hits;
        for h in &got {
            ensure(filters.matches(h.chunk), || {
                format!("query {i}: {} violates the filters", h.chunk.chunk_id)
            })?;
            ensure(
                filters.section == SectionLabel::All || h.chunk.section == filters.section,
                || format!("query {i}: wrong section"),
            )?;
        }
        ensure(
            got.windows(2).all(|w| w[0].similarity >= w[1].similarity),
            || format!("query {i}: not ranked"),
        )?;
        let got: Vec<(String, f64)> = got
            .iter()
            .map(|h| (h.chunk.chunk_id.clone(), h.similarity))
            .collect();
        let want = brute_force_rank(corpus.chunks(), &filters, &text_embedding(&q.query), q.k);
        ensure(got == want, || {
            format!("query {i}: differs from brute force")
        })?;
    }
    let took = within_time(started, 10.0)?;
    Ok(format!(
        "30 section queries and 200 random filtered queries equal brute force in {took:.2}s"
    ))
}

fn budget_enforcement(_: &Path) -> Result<String, String> {
    let registry = echo_registry();
    let calls = |events: &[SessionEvent]| {
        events
            .iter()
            .filter(|e| e.kind() == EventKind::ToolCall)
            .count()
    };
    let changes = |events: &[SessionEvent]| -> Vec<BudgetChange> {
        events
            .iter()
            .filter_map(|e| match &e.body {
                EventBody::Budget { record, .. } => Some(record.change),
                _ => None,
            })
            .collect()
    };
    let plain = run(
        &registry,
        single_step_script(21, &[], 20),
        &["q"],
        Limits::default(),
    )?;
    ensure(calls(&plain.events) == 20, || {
        format!("{} steps without extension", calls(&plain.events))
    })?;
    ensure(changes(&plain.events) == [BudgetChange::Exhausted], || {
        format!("{:?}", changes(&plain.events))
    })?;

    let extended = run(
        &registry,
        single_step_script(31, &[3], 30),
        &["q"],
        Limits::default(),
    )?;
    ensure(calls(&extended.events) == 30, || {
        format!("{} steps with one extension", calls(&extended.events))
    })?;

    let greedy = run(
        &registry,
        single_step_script(41, &[0, 1, 2, 3], 40),
        &["q"],
        Limits::default(),
    )?;
    let granted = greedy
        .state
        .tasks
        .first()
        .map(|t| t.budget.extensions_granted)
        .unwrap_or(0);
    ensure(calls(&greedy.events) == 40 && granted == 2, || {
        format!(
            "{} steps, {granted} extensions after four requests",
            calls(&greedy.events)
        )
    })?;
    Ok("cut at 20, at 30 with one extension, at most 2 extensions granted".into())
}

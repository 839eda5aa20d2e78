use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use copilot_core::lake::DataLake;
use copilot_core::scientometrics::{
    disruption_for_focal, disruption_from_counts, pearson_correlation, percent_change,
    percentile_rank, CitationGraph, DisruptionBreakdown, MetricsError, PaperId,
};
use proptest::prelude::*;
use rusqlite::types::Value;

#[derive(Debug, Clone)]
struct RandomGraph {
    years: Vec<i64>,
    edges: BTreeSet<(usize, usize)>,
    focal: usize,
    references: BTreeSet<usize>,
    cutoff: i64,
}

impl RandomGraph {
    fn build(&self) -> CitationGraph {
        let mut g = CitationGraph::new();
        for (i, y) in self.years.iter().enumerate() {
            g.add_paper(i as PaperId, *y);
        }
        for (a, b) in &self.edges {
            g.add_citation(*a as PaperId, *b as PaperId).unwrap();
        }
        g
    }

    fn refs(&self) -> BTreeSet<PaperId> {
        self.references.iter().map(|r| *r as PaperId).collect()
    }
}

/// Classifies every paper in turn straight from the edge list.
fn brute_force(g: &RandomGraph) -> (u64, u64, u64) {
    let (mut n_i, mut n_j, mut n_k) = (0, 0, 0);
    for p in 0..g.years.len() {
        if p == g.focal || g.years[p] <= g.cutoff {
            continue;
        }
        let cites_focal = g.edges.contains(&(p, g.focal));
        let cites_ref = g.references.iter().any(|r| g.edges.contains(&(p, *r)));
        match (cites_focal, cites_ref) {
            (true, false) => n_i += 1,
            (true, true) => n_j += 1,
            (false, true) => n_k += 1,
            (false, false) => {}
        }
    }
    (n_i, n_j, n_k)
}

fn random_graph() -> impl Strategy<Value = RandomGraph> {
    (2usize..=50).prop_flat_map(|n| {
        (
            proptest::collection::vec(1990i64..2010, n),
            proptest::collection::btree_set((0..n, 0..n), 0..=n * 4),
            0..n,
            proptest::collection::btree_set(0..n, 0..=n / 2),
            1988i64..2010,
            any::<bool>(),
        )
            .prop_map(|(years, edges, focal, refs, cutoff, use_graph_refs)| {
                let edges: BTreeSet<(usize, usize)> =
                    edges.into_iter().filter(|(a, b)| a != b).collect();
                let references = if use_graph_refs {
                    edges
                        .iter()
                        .filter(|(a, _)| *a == focal)
                        .map(|(_, b)| *b)
                        .collect()
                } else {
                    refs.into_iter().filter(|r| *r != focal).collect()
                };
                RandomGraph {
                    years,
                    edges,
                    focal,
                    references,
                    cutoff,
                }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn focal_disruption_equals_brute_force(g in random_graph()) {
        let got = disruption_for_focal(&g.build(), g.focal as PaperId, &g.refs(), g.cutoff).unwrap();
        let (n_i, n_j, n_k) = brute_force(&g);
        prop_assert_eq!((got.n_i, got.n_j, got.n_k), (n_i, n_j, n_k));
        let expected = (n_i + n_j + n_k > 0)
            .then(|| (n_i as f64 - n_j as f64) / (n_i + n_j + n_k) as f64);
        prop_assert_eq!(got.score, expected);
        if let Some(s) = got.score {
            prop_assert!((-1.0..=1.0).contains(&s));
        }
    }
}

proptest! {
    #[test]
    fn scores_stay_in_bounds(n_i in 0u64..10_000, n_j in 0u64..10_000, n_k in 0u64..10_000) {
        let b = disruption_from_counts(n_i, n_j, n_k);
        prop_assert_eq!(b.score.is_some(), n_i + n_j + n_k > 0);
        if let Some(s) = b.score {
            prop_assert!((-1.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn an_exclusive_citer_never_lowers_the_score(n_i in 0u64..500, n_j in 0u64..500, n_k in 0u64..500) {
        prop_assume!(n_i + n_j + n_k > 0);
        let before = disruption_from_counts(n_i, n_j, n_k).score.unwrap();
        let after = disruption_from_counts(n_i + 1, n_j, n_k).score.unwrap();
        prop_assert!(after >= before);
        let n = (n_i + n_j + n_k) as f64;
        let delta = (2 * n_j + n_k) as f64 / (n * (n + 1.0));
        prop_assert!((after - before - delta).abs() < 1e-12);
    }

    #[test]
    fn correlation_is_affine_invariant(
        pts in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..40),
        a in 0.01f64..100.0, b in -100f64..100.0, c in 0.01f64..100.0, d in -100f64..100.0,
    ) {
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let Ok(r) = pearson_correlation(&xs, &ys) else { return Ok(()); };
        let xs2: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        let ys2: Vec<f64> = ys.iter().map(|y| c * y + d).collect();
        let r2 = pearson_correlation(&xs2, &ys2).unwrap();
        prop_assert!((r - r2).abs() < 1e-12, "{} vs {}", r, r2);
        prop_assert!((-1.0..=1.0).contains(&r));
    }

    #[test]
    fn percentile_is_monotone(
        pop in proptest::collection::vec(-100f64..100.0, 1..60),
        v1 in -120f64..120.0, v2 in -120f64..120.0,
    ) {
        let (lo, hi) = if v1 <= v2 { (v1, v2) } else { (v2, v1) };
        let p_lo = percentile_rank(&pop, lo).unwrap();
        let p_hi = percentile_rank(&pop, hi).unwrap();
        prop_assert!(p_lo <= p_hi);
        prop_assert!((0.0..=100.0).contains(&p_lo) && (0.0..=100.0).contains(&p_hi));
    }
}

const TEAM_DISRUPTION: [f64; 10] = [
    56.098700, 48.618542, 47.145945, 45.950665, 44.964650, 44.105816, 43.679090, 43.392148,
    43.018289, 42.710667,
];
const TEAM_CITATIONS: [f64; 10] = [
    20.453189, 36.634414, 36.267423, 36.153230, 36.069241, 36.977249, 38.810713, 39.196685,
    40.828852, 41.677381,
];

#[test]
fn team_size_table_correlations() {
    let x: Vec<f64> = (1..=10).map(f64::from).collect();
    let rd = pearson_correlation(&x, &TEAM_DISRUPTION).unwrap();
    let rc = pearson_correlation(&x, &TEAM_CITATIONS).unwrap();
    assert!((rd + 0.846).abs() <= 0.001, "{rd}");
    assert!((rc - 0.755).abs() <= 0.001, "{rc}");
    let pd = percent_change(TEAM_DISRUPTION[0], TEAM_DISRUPTION[9]).unwrap();
    let pc = percent_change(TEAM_CITATIONS[0], TEAM_CITATIONS[9]).unwrap();
    assert!((pd + 23.9).abs() <= 0.05, "{pd}");
    assert!((pc - 103.8).abs() <= 0.05, "{pc}");
}

fn fixture_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/lake")
}

/// The fixture's disruption columns come from a separate Python
/// implementation; both must agree on every paper.
#[test]
fn fixture_scores_agree_with_independent_generator() {
    let lake = DataLake::load_fixture(fixture_dir()).unwrap();
    let graph = CitationGraph::from_lake(&lake).unwrap();
    assert_eq!(graph.len(), 250);

    let stored: BTreeMap<PaperId, (Option<f64>, Option<f64>, i64)> = lake
        .fetch(
            "SELECT paper_id, disruption_score, disruption_score_pct, citation_count FROM papers",
        )
        .unwrap()
        .into_iter()
        .map(|r| {
            let opt = |v: &Value| match v {
                Value::Real(x) => Some(*x),
                Value::Integer(i) => Some(*i as f64),
                _ => None,
            };
            let Value::Integer(id) = r[0] else { panic!() };
            let Value::Integer(cc) = r[3] else { panic!() };
            (id, (opt(&r[1]), opt(&r[2]), cc))
        })
        .collect();

    let mut computed = BTreeMap::new();
    for (id, year) in graph.papers() {
        let d: DisruptionBreakdown =
            disruption_for_focal(&graph, id, &graph.references(id), year).unwrap();
        computed.insert(id, d.score.map(|s| (s * 1e6).round() / 1e6));
        assert_eq!(graph.citers(id).len() as i64, stored[&id].2);
    }
    let population: Vec<f64> = computed.values().flatten().copied().collect();
    assert!(population.len() > 100);
    for (id, score) in &computed {
        let (want_score, want_pct, _) = stored[id];
        assert_eq!(*score, want_score, "paper {id}");
        match score {
            Some(s) => {
                let pct = percentile_rank(&population, *s).unwrap();
                assert!((pct - want_pct.unwrap()).abs() < 1e-6, "paper {id}: {pct}");
            }
            None => assert_eq!(want_pct, None),
        }
    }
}

#[test]
fn graph_loads_from_csv_pair() {
    let dir = tempfile::tempdir().unwrap();
    let years = dir.path().join("years.csv");
    let edges = dir.path().join("edges.csv");
    std::fs::write(&years, "paper_id,year\n1,2000\n2,2001\n3,1995\n").unwrap();
    std::fs::write(&edges, "citing_paper_id,cited_paper_id\n2,1\n2,3\n").unwrap();
    let g = CitationGraph::from_csv(&years, &edges).unwrap();
    assert_eq!((g.len(), g.edge_count()), (3, 2));
    let d = disruption_for_focal(&g, 1, &BTreeSet::from([3]), 2000).unwrap();
    assert_eq!((d.n_i, d.n_j, d.n_k), (0, 1, 0));

    std::fs::write(&edges, "citing_paper_id,cited_paper_id\n2,9\n").unwrap();
    assert_eq!(
        CitationGraph::from_csv(&years, &edges),
        Err(MetricsError::UnknownPaper(9))
    );
}

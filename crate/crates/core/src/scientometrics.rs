//! Citation-graph metrics: disruption, percentile ranks, grouped summary
//! statistics, correlation and percent change.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rusqlite::types::Value;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lake::DataLake;

pub type PaperId = i64;

/// Two-sided 95% normal quantile used for confidence intervals.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("paper {0} is not in the citation graph")]
    UnknownPaper(PaperId),
    #[error("paper {0} cannot cite itself")]
    SelfCitation(PaperId),
    #[error("the focal paper {0} cannot be one of its own references")]
    FocalInReferences(PaperId),
    #[error("population is empty")]
    EmptyPopulation,
    #[error("no records to summarize")]
    EmptyInput,
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("correlation needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("percent change from a zero base is undefined")]
    ZeroBase,
    #[error("cannot load citation graph: {0}")]
    Load(String),
}

/// Citation counts around one focal paper and the resulting score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisruptionBreakdown {
    pub n_i: u64,
    pub n_j: u64,
    pub n_k: u64,
    /// Absent when no paper falls into any of the three sets.
    pub score: Option<f64>,
}

pub fn disruption_from_counts(n_i: u64, n_j: u64, n_k: u64) -> DisruptionBreakdown {
    let total = n_i + n_j + n_k;
    let score = (total > 0).then(|| (n_i as f64 - n_j as f64) / total as f64);
    DisruptionBreakdown {
        n_i,
        n_j,
        n_k,
        score,
    }
}

/// Papers with publication years and directed citation edges.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CitationGraph {
    years: BTreeMap<PaperId, i64>,
    cites: BTreeMap<PaperId, BTreeSet<PaperId>>,
    cited_by: BTreeMap<PaperId, BTreeSet<PaperId>>,
}

impl CitationGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_paper(&mut self, id: PaperId, year: i64) {
        self.years.insert(id, year);
    }

    pub fn add_citation(&mut self, citing: PaperId, cited: PaperId) -> Result<(), MetricsError> {
        if citing == cited {
            return Err(MetricsError::SelfCitation(citing));
        }
        for id in [citing, cited] {
            if !self.years.contains_key(&id) {
                return Err(MetricsError::UnknownPaper(id));
            }
        }
        self.cites.entry(citing).or_default().insert(cited);
        self.cited_by.entry(cited).or_default().insert(citing);
        Ok(())
    }

    pub fn year(&self, id: PaperId) -> Option<i64> {
        self.years.get(&id).copied()
    }

    pub fn papers(&self) -> impl Iterator<Item = (PaperId, i64)> + '_ {
        self.years.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.cites.values().map(BTreeSet::len).sum()
    }

    /// Papers cited by `id`.
    pub fn references(&self, id: PaperId) -> BTreeSet<PaperId> {
        self.cites.get(&id).cloned().unwrap_or_default()
    }

    /// Papers citing `id`.
    pub fn citers(&self, id: PaperId) -> BTreeSet<PaperId> {
        self.cited_by.get(&id).cloned().unwrap_or_default()
    }

    /// Builds the graph from the `papers` and `paper_citations` tables.
    /// Papers without a year are left out together with their edges.
    pub fn from_lake(lake: &DataLake) -> Result<Self, MetricsError> {
        let load = |e: crate::lake::QueryError| MetricsError::Load(e.to_string());
        let mut graph = Self::new();
        for row in lake
            .fetch(
                "SELECT paper_id, year FROM papers WHERE paper_id IS NOT NULL AND year IS NOT NULL",
            )
            .map_err(load)?
        {
            if let (Value::Integer(id), Value::Integer(year)) = (&row[0], &row[1]) {
                graph.add_paper(*id, *year);
            }
        }
        for row in lake
            .fetch("SELECT citing_paper_id, cited_paper_id FROM paper_citations")
            .map_err(load)?
        {
            if let (Value::Integer(a), Value::Integer(b)) = (&row[0], &row[1]) {
                if graph.years.contains_key(a) && graph.years.contains_key(b) {
                    graph.add_citation(*a, *b)?;
                }
            }
        }
        Ok(graph)
    }

    /// Builds the graph from a `(paper_id, year)` CSV and a
    /// `(citing_paper_id, cited_paper_id)` CSV, both with a header row.
    pub fn from_csv(years: &Path, edges: &Path) -> Result<Self, MetricsError> {
        fn pairs(path: &Path) -> Result<Vec<(i64, i64)>, MetricsError> {
            let err =
                |e: &dyn std::fmt::Display| MetricsError::Load(format!("{}: {e}", path.display()));
            let mut reader = csv::Reader::from_path(path).map_err(|e| err(&e))?;
            reader
                .records()
                .map(|rec| {
                    let rec = rec.map_err(|e| err(&e))?;
                    let field = |i: usize| -> Result<i64, MetricsError> {
                        let raw = rec.get(i).unwrap_or("").trim();
                        raw.parse()
                            .map_err(|_| err(&format!("{raw:?} is not an integer")))
                    };
                    Ok((field(0)?, field(1)?))
                })
                .collect()
        }
        let mut graph = Self::new();
        for (id, year) in pairs(years)? {
            graph.add_paper(id, year);
        }
        for (a, b) in pairs(edges)? {
            graph.add_citation(a, b)?;
        }
        Ok(graph)
    }
}

/// Disruption of `focal` with respect to `references`, counting only citing
/// papers published strictly after `min_citing_year_exclusive`.
pub fn disruption_for_focal(
    graph: &CitationGraph,
    focal: PaperId,
    references: &BTreeSet<PaperId>,
    min_citing_year_exclusive: i64,
) -> Result<DisruptionBreakdown, MetricsError> {
    if !graph.years.contains_key(&focal) {
        return Err(MetricsError::UnknownPaper(focal));
    }
    if references.contains(&focal) {
        return Err(MetricsError::FocalInReferences(focal));
    }
    if let Some(r) = references.iter().find(|r| !graph.years.contains_key(r)) {
        return Err(MetricsError::UnknownPaper(*r));
    }
    let recent = |id: &PaperId| id != &focal && graph.years[id] > min_citing_year_exclusive;
    let focal_citers: BTreeSet<PaperId> = graph.citers(focal).into_iter().filter(recent).collect();
    let ref_citers: BTreeSet<PaperId> = references
        .iter()
        .flat_map(|r| graph.cited_by.get(r).into_iter().flatten())
        .copied()
        .filter(recent)
        .collect();
    let n_j = focal_citers.intersection(&ref_citers).count() as u64;
    let n_i = focal_citers.len() as u64 - n_j;
    let n_k = ref_citers.len() as u64 - n_j;
    Ok(disruption_from_counts(n_i, n_j, n_k))
}

/// `100 * |{x in population : x < v}| / |population|`.
pub fn percentile_rank(population: &[f64], v: f64) -> Result<f64, MetricsError> {
    if population.is_empty() {
        return Err(MetricsError::EmptyPopulation);
    }
    let below = population.iter().filter(|x| **x < v).count();
    Ok(100.0 * below as f64 / population.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary<K> {
    pub group_key: K,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub count: usize,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Mean, sample deviation, standard error and 95% interval per group,
/// sorted by key.
pub fn group_stats<K: Ord + Clone>(
    records: &[(K, f64)],
) -> Result<Vec<GroupSummary<K>>, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut groups: BTreeMap<&K, Vec<f64>> = BTreeMap::new();
    for (k, v) in records {
        groups.entry(k).or_default().push(*v);
    }
    Ok(groups
        .into_iter()
        .map(|(k, values)| {
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            let std_error = std / (n as f64).sqrt();
            GroupSummary {
                group_key: k.clone(),
                mean,
                std,
                count: n,
                std_error,
                ci_low: mean - Z_95 * std_error,
                ci_high: mean + Z_95 * std_error,
            }
        })
        .collect())
}

/// Sample Pearson correlation coefficient, clamped to [-1, 1].
pub fn pearson_correlation(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    if xs.len() != ys.len() {
        return Err(MetricsError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(MetricsError::TooFewPoints(n));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// `100 * (last - first) / first`.
pub fn percent_change(first: f64, last: f64) -> Result<f64, MetricsError> {
    if first == 0.0 {
        return Err(MetricsError::ZeroBase);
    }
    Ok(100.0 * (last - first) / first)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn counts_reproduce_reference_rows() {
        for (n, expected) in [
            ((95, 15, 55), 0.484848),
            ((53, 7, 30), 0.511111),
            ((8, 0, 22), 0.266667),
            ((54, 36, 83), 0.104046),
            ((12, 0, 0), 1.0),
        ] {
            let b = disruption_from_counts(n.0, n.1, n.2);
            assert!(close(b.score.unwrap(), expected, 1e-6), "{n:?} -> {b:?}");
        }
        assert_eq!(disruption_from_counts(0, 0, 0).score, None);
    }

    #[test]
    fn hand_built_graph() {
        let (f, a, b, c, r) = (1, 2, 3, 4, 5);
        let mut g = CitationGraph::new();
        g.add_paper(f, 2000);
        for p in [a, b, c] {
            g.add_paper(p, 2001);
        }
        g.add_paper(r, 1995);
        g.add_citation(a, f).unwrap();
        g.add_citation(b, f).unwrap();
        g.add_citation(b, r).unwrap();
        g.add_citation(c, r).unwrap();
        let d = disruption_for_focal(&g, f, &BTreeSet::from([r]), 2000).unwrap();
        assert_eq!((d.n_i, d.n_j, d.n_k, d.score), (1, 1, 1, Some(0.0)));

        let none = disruption_for_focal(&g, f, &BTreeSet::from([r]), 2001).unwrap();
        assert_eq!((none.n_i, none.n_j, none.n_k, none.score), (0, 0, 0, None));

        assert_eq!(
            disruption_for_focal(&g, 99, &BTreeSet::new(), 0),
            Err(MetricsError::UnknownPaper(99))
        );
        assert_eq!(g.add_citation(a, a), Err(MetricsError::SelfCitation(a)));
        assert_eq!(g.add_citation(a, 77), Err(MetricsError::UnknownPaper(77)));
    }

    #[test]
    fn percentile_examples() {
        assert_eq!(percentile_rank(&[1.0, 2.0, 2.0, 3.0], 2.0).unwrap(), 25.0);
        assert_eq!(percentile_rank(&[3.0, 1.0, 2.0], 1.0).unwrap(), 0.0);
        assert!(close(
            percentile_rank(&[3.0, 1.0, 2.0], 3.0).unwrap(),
            200.0 / 3.0,
            1e-12
        ));
        assert_eq!(
            percentile_rank(&[], 1.0),
            Err(MetricsError::EmptyPopulation)
        );
    }

    #[test]
    fn group_stats_examples() {
        let one = group_stats(&[("a", 5.0), ("a", 5.0), ("a", 5.0)]).unwrap();
        assert_eq!(
            (one[0].mean, one[0].std, one[0].ci_high - one[0].ci_low),
            (5.0, 0.0, 0.0)
        );

        let g = group_stats(&[(2, 1.0), (2, 3.0), (1, 9.0)]).unwrap();
        assert_eq!(g.iter().map(|s| s.group_key).collect::<Vec<_>>(), [1, 2]);
        let s = &g[1];
        assert!(close(s.mean, 2.0, 1e-12));
        assert!(close(s.std, 2f64.sqrt(), 1e-12));
        assert!(close(s.std_error, 1.0, 1e-12));
        assert!(close(s.ci_low, 0.04, 1e-12) && close(s.ci_high, 3.96, 1e-12));
        assert_eq!((g[0].count, g[0].std), (1, 0.0));
        assert_eq!(group_stats::<i32>(&[]), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn correlation_and_change_examples() {
        let xs = [1.0, 2.0, 4.0, 7.0];
        assert!(close(pearson_correlation(&xs, &xs).unwrap(), 1.0, 1e-12));
        let neg: Vec<f64> = xs.iter().map(|x| -2.0 * x + 3.0).collect();
        assert!(close(pearson_correlation(&xs, &neg).unwrap(), -1.0, 1e-12));
        assert_eq!(
            pearson_correlation(&xs, &[1.0; 4]),
            Err(MetricsError::ZeroVariance)
        );
        assert_eq!(
            pearson_correlation(&xs, &[1.0]),
            Err(MetricsError::LengthMismatch(4, 1))
        );
        assert_eq!(
            pearson_correlation(&[1.0], &[1.0]),
            Err(MetricsError::TooFewPoints(1))
        );

        assert_eq!(percent_change(4.0, 4.0).unwrap(), 0.0);
        assert_eq!(percent_change(0.0, 1.0), Err(MetricsError::ZeroBase));
    }
}

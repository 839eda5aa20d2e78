use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use copilot_core::lake::{cosine_similarity, text_embedding};
use copilot_core::rag::{
    rank, retrieve, synthesize, Corpus, CorpusChunk, Filters, LiteratureQuery, SectionLabel,
};
use proptest::prelude::*;

fn corpus_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/corpus/documents.json")
}

fn corpus() -> &'static Corpus {
    static C: std::sync::OnceLock<Corpus> = std::sync::OnceLock::new();
    C.get_or_init(|| Corpus::load(&corpus_path()).unwrap())
}

/// Exhaustive ranking written independently of the library's sort.
fn brute_force(
    chunks: &[CorpusChunk],
    filters: &Filters,
    q: &[f64],
    k: usize,
) -> Vec<(String, f64)> {
    let mut scored: Vec<(String, f64)> = Vec::new();
    for c in chunks {
        let year_ok = filters.year.is_none_or(|y| y == c.year);
        let section_ok = filters.section == SectionLabel::All || filters.section == c.section;
        let author_ok = filters.author.as_ref().is_none_or(|a| {
            c.authors
                .iter()
                .any(|n| n.to_lowercase().contains(&a.to_lowercase()))
        });
        let title_ok = filters
            .title
            .as_ref()
            .is_none_or(|t| c.paper_title.to_lowercase().contains(&t.to_lowercase()));
        if year_ok && section_ok && author_ok && title_ok {
            scored.push((c.chunk_id.clone(), cosine_similarity(q, &c.embedding)));
        }
    }
    // selection sort: repeatedly take the best remaining
    let mut out = Vec::new();
    while out.len() < k && !scored.is_empty() {
        let mut best = 0;
        for i in 1..scored.len() {
            let (a, b) = (&scored[i], &scored[best]);
            if a.1 > b.1 || (a.1 == b.1 && a.0 < b.0) {
                best = i;
            }
        }
        out.push(scored.remove(best));
    }
    out
}

#[test]
fn fixture_has_one_hundred_labelled_chunks() {
    let c = corpus();
    assert_eq!(c.len(), 100);
    let labels: BTreeSet<SectionLabel> = c.chunks().iter().map(|c| c.section).collect();
    assert_eq!(labels.len(), 9);
    assert!(!labels.contains(&SectionLabel::All));
    assert!(c
        .chunks()
        .iter()
        .all(|c| !c.body.is_empty() && !c.summary.is_empty()));
    assert!(c.chunks().iter().all(|c| c.embedding.len() == 768));
    assert_eq!(Corpus::load(&corpus_path()).unwrap(), *c);
}

#[test]
fn unfiltered_and_section_filtered_retrieval_match_brute_force() {
    let c = corpus();
    for query in [
        "small teams disrupt science",
        "gender gaps in authorship",
        "patents and innovation",
    ] {
        for section in SectionLabel::LABELS {
            let q = LiteratureQuery::new(query).section(section);
            let got = retrieve(c, &q, None).unwrap();
            assert!(got.expansion.fallback);
            let want = brute_force(c.chunks(), &q.filters, &text_embedding(query), q.k);
            let got: Vec<(String, f64)> = got
                .hits
                .iter()
                .map(|h| (h.chunk.chunk_id.clone(), h.similarity))
                .collect();
            assert_eq!(got, want, "{query} / {section}");
        }
    }
}

#[test]
fn few_candidates_return_all_of_them() {
    let c = corpus();
    let mut q = LiteratureQuery::new("teams");
    q.filters.title = Some("Team size and disruption".into());
    q.filters.section = SectionLabel::Abstract;
    let hits = retrieve(c, &q, None).unwrap().hits;
    let candidates = c.chunks().iter().filter(|ch| q.filters.matches(ch)).count();
    assert!(candidates < 10 && candidates > 0);
    assert_eq!(hits.len(), candidates);
}

fn filters() -> impl Strategy<Value = Filters> {
    (
        proptest::option::of(2003i64..2025),
        proptest::option::of(prop::sample::select(vec![
            "a", "Gomez", "ben", "zz", "lena",
        ])),
        prop::sample::select(SectionLabel::LABELS.to_vec()),
        proptest::option::of(prop::sample::select(vec![
            "team",
            "Citation",
            "evidence 1",
            "and",
            "none",
        ])),
    )
        .prop_map(|(year, author, section, title)| Filters {
            year,
            author: author.map(str::to_string),
            section,
            title: title.map(str::to_string),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn retrieval_is_sound_ranked_and_exhaustive(
        query in "[a-z]{3,10}( [a-z]{3,10}){0,4}",
        k in 1usize..25,
        filters in filters(),
    ) {
        let c = corpus();
        let q = LiteratureQuery { query: query.clone(), k, filters: filters.clone() };
        let hits = retrieve(c, &q, None).unwrap().hits;
        for h in &hits {
            prop_assert!(filters.matches(h.chunk));
            if filters.section != SectionLabel::All {
                prop_assert_eq!(h.chunk.section, filters.section);
            }
            if let Some(y) = filters.year {
                prop_assert_eq!(h.chunk.year, y);
            }
        }
        for w in hits.windows(2) {
            prop_assert!(w[0].similarity >= w[1].similarity);
        }
        let want = brute_force(c.chunks(), &filters, &text_embedding(&query), k);
        let got: Vec<(String, f64)> = hits.iter().map(|h| (h.chunk.chunk_id.clone(), h.similarity)).collect();
        prop_assert_eq!(got, want);

        let s = synthesize(&query, &hits, None).unwrap();
        let titles: BTreeSet<&str> = hits.iter().map(|h| h.chunk.paper_title.as_str()).collect();
        prop_assert!(s.references.iter().all(|r| titles.contains(r.title.as_str())));
        prop_assert_eq!(s.references.len(), titles.len());
    }

    #[test]
    fn out_of_range_citations_are_rejected(n in 0usize..6, extra in 1usize..4) {
        let c = corpus();
        let hits = rank(c, &Filters::default(), &text_embedding("teams"), n);
        let papers: BTreeSet<&str> = hits.iter().map(|h| h.chunk.paper_title.as_str()).collect();
        let m = papers.len();
        let bad = format!("Claim [{}].", m + extra);
        let refs: Vec<copilot_core::rag::Reference> = (1..=m)
            .map(|i| copilot_core::rag::Reference { number: i, title: format!("t{i}"), authors: vec![], year: 2000 })
            .collect();
        prop_assert!(copilot_core::rag::validate_synthesis(&bad, &refs).is_err());
        if m > 0 {
            let good = format!("Claim [{m}].");
            let s = copilot_core::rag::validate_synthesis(&good, &refs).unwrap();
            prop_assert_eq!(s.references.len(), 1);
            prop_assert_eq!(s.references[0].number, m);
        }
    }
}

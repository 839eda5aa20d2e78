//! Literature retrieval: paragraph ingestion with section labels and
//! summaries, HyDE query expansion, filtered top-k retrieval and referenced
//! synthesis.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::{self, BufRead, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lake::{cosine_similarity, text_embedding};
use crate::llm::{ChatMessage, ChatProvider, GenerationParams, ProviderError};

pub const DEFAULT_K: usize = 10;
pub const NO_RESULTS: &str = "No relevant results were found in the literature corpus.";

const CLASSIFY_PROMPT: &str = "You label paragraphs of scientific papers. Reply with exactly one of: \
Abstract, Introduction, Related Works, Methodology, Results, Discussion, Conclusion, Appendix, Acknowledgement.";
const SUMMARY_PROMPT: &str =
    "Summarize the paragraph from a scientific paper in 2-3 sentences. Reply with the summary only.";
const HYDE_PROMPT: &str =
    "Write a short passage from a science-of-science paper that answers the question. \
Reply with the passage only.";
const SYNTHESIS_PROMPT: &str =
    "Answer the question in one paragraph using only the numbered sources. \
Cite sources in the text as [n] using their numbers. Do not cite anything else.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SectionLabel {
    All,
    Abstract,
    Introduction,
    #[serde(rename = "Related Works")]
    RelatedWorks,
    Methodology,
    Results,
    Discussion,
    Conclusion,
    Appendix,
    Acknowledgement,
}

impl SectionLabel {
    pub const LABELS: [SectionLabel; 10] = [
        SectionLabel::All,
        SectionLabel::Abstract,
        SectionLabel::Introduction,
        SectionLabel::RelatedWorks,
        SectionLabel::Methodology,
        SectionLabel::Results,
        SectionLabel::Discussion,
        SectionLabel::Conclusion,
        SectionLabel::Appendix,
        SectionLabel::Acknowledgement,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SectionLabel::All => "All",
            SectionLabel::Abstract => "Abstract",
            SectionLabel::Introduction => "Introduction",
            SectionLabel::RelatedWorks => "Related Works",
            SectionLabel::Methodology => "Methodology",
            SectionLabel::Results => "Results",
            SectionLabel::Discussion => "Discussion",
            SectionLabel::Conclusion => "Conclusion",
            SectionLabel::Appendix => "Appendix",
            SectionLabel::Acknowledgement => "Acknowledgement",
        }
    }

    /// Labels a chunk may carry.
    pub fn stored() -> impl Iterator<Item = SectionLabel> {
        Self::LABELS.into_iter().filter(|l| *l != SectionLabel::All)
    }
}

impl fmt::Display for SectionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown section label `{0}`")]
pub struct UnknownSection(pub String);

impl FromStr for SectionLabel {
    type Err = UnknownSection;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::LABELS
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| UnknownSection(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum RagError {
    #[error("document `{0}` has no paragraphs")]
    NoParagraphs(String),
    #[error("document `{title}` paragraph {index} is empty")]
    EmptyParagraph { title: String, index: usize },
    #[error("query must not be empty")]
    EmptyQuery,
    #[error("k must be a positive integer")]
    ZeroK,
    #[error("duplicate chunk id `{0}`")]
    DuplicateChunk(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("synthesis cited unknown source(s) {cited:?}; valid numbers are 1..={available}")]
    UnknownReference { cited: Vec<usize>, available: usize },
    #[error("classifier replied with `{0}`, which is not a section label")]
    BadLabel(String),
    #[error("corpus line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentMeta {
    pub title: String,
    pub authors: Vec<String>,
    pub year: i64,
}

/// A pre-parsed document: metadata plus its paragraphs in reading order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    #[serde(flatten)]
    pub meta: DocumentMeta,
    pub paragraphs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusChunk {
    pub chunk_id: String,
    pub paper_title: String,
    pub authors: Vec<String>,
    pub year: i64,
    pub section: SectionLabel,
    pub body: String,
    pub summary: String,
    pub embedding: Vec<f64>,
}

/// Keyword rule on the paragraph's leading header; Discussion otherwise.
pub fn heuristic_section(paragraph: &str) -> SectionLabel {
    let head: String = paragraph
        .trim_start_matches(|c: char| c.is_whitespace() || c == '#' || c == '*')
        .trim_start_matches(|c: char| c.is_ascii_digit() || c == '.' || c == ' ')
        .chars()
        .take(40)
        .collect::<String>()
        .to_lowercase();
    const RULES: &[(&str, SectionLabel)] = &[
        ("abstract", SectionLabel::Abstract),
        ("introduction", SectionLabel::Introduction),
        ("background", SectionLabel::Introduction),
        ("related work", SectionLabel::RelatedWorks),
        ("literature review", SectionLabel::RelatedWorks),
        ("prior work", SectionLabel::RelatedWorks),
        ("method", SectionLabel::Methodology),
        ("data and method", SectionLabel::Methodology),
        ("materials", SectionLabel::Methodology),
        ("results", SectionLabel::Results),
        ("findings", SectionLabel::Results),
        ("discussion", SectionLabel::Discussion),
        ("conclusion", SectionLabel::Conclusion),
        ("appendix", SectionLabel::Appendix),
        ("supplementary", SectionLabel::Appendix),
        ("acknowledg", SectionLabel::Acknowledgement),
    ];
    RULES
        .iter()
        .find(|(kw, _)| head.starts_with(kw))
        .map(|(_, l)| *l)
        .unwrap_or(SectionLabel::Discussion)
}

/// The first two sentences of `body`.
pub fn heuristic_summary(body: &str) -> String {
    let body = body.trim();
    let mut ends = 0;
    let mut cut = body.len();
    let chars: Vec<(usize, char)> = body.char_indices().collect();
    for (n, (i, c)) in chars.iter().enumerate() {
        let next_is_space = chars.get(n + 1).is_none_or(|(_, d)| d.is_whitespace());
        if matches!(c, '.' | '?' | '!') && next_is_space {
            ends += 1;
            if ends == 2 {
                cut = i + c.len_utf8();
                break;
            }
        }
    }
    body[..cut].to_string()
}

fn parse_label(reply: &str) -> Option<SectionLabel> {
    let cleaned = reply
        .trim()
        .trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace());
    SectionLabel::stored().find(|l| l.as_str().eq_ignore_ascii_case(cleaned))
}

fn ask(provider: &dyn ChatProvider, system: &str, user: String) -> Result<String, ProviderError> {
    let messages = [ChatMessage::system(system), ChatMessage::user(user)];
    Ok(provider
        .complete(&messages, &[], &GenerationParams::evaluator())?
        .text
        .trim()
        .to_string())
}

fn chunk_id(meta: &DocumentMeta, index: usize) -> String {
    use std::hash::Hasher;
    let mut h = fnv::FnvHasher::default();
    h.write(format!("{}\u{1f}{}", meta.title, meta.year).as_bytes());
    format!("{:016x}-{index:04}", h.finish())
}

/// Paragraph ingestion with optional provider-backed labelling and
/// summaries; without providers it falls back to the keyword heuristic and
/// the first two sentences.
#[derive(Default, Clone, Copy)]
pub struct Ingestor<'a> {
    classifier: Option<&'a dyn ChatProvider>,
    summarizer: Option<&'a dyn ChatProvider>,
}

impl<'a> Ingestor<'a> {
    pub fn heuristic() -> Self {
        Self::default()
    }

    pub fn with_classifier(mut self, provider: &'a dyn ChatProvider) -> Self {
        self.classifier = Some(provider);
        self
    }

    pub fn with_summarizer(mut self, provider: &'a dyn ChatProvider) -> Self {
        self.summarizer = Some(provider);
        self
    }

    /// One chunk per paragraph, in order.
    pub fn ingest(
        &self,
        meta: &DocumentMeta,
        paragraphs: &[String],
    ) -> Result<Vec<CorpusChunk>, RagError> {
        if paragraphs.is_empty() {
            return Err(RagError::NoParagraphs(meta.title.clone()));
        }
        paragraphs
            .iter()
            .enumerate()
            .map(|(index, body)| {
                let body = body.trim();
                if body.is_empty() {
                    return Err(RagError::EmptyParagraph {
                        title: meta.title.clone(),
                        index,
                    });
                }
                let section = match self.classifier {
                    Some(p) => {
                        let reply = ask(p, CLASSIFY_PROMPT, body.to_string())?;
                        parse_label(&reply).ok_or(RagError::BadLabel(reply))?
                    }
                    None => heuristic_section(body),
                };
                let summary = match self.summarizer {
                    Some(p) => {
                        Some(ask(p, SUMMARY_PROMPT, body.to_string())?).filter(|s| !s.is_empty())
                    }
                    None => None,
                }
                .unwrap_or_else(|| heuristic_summary(body));
                Ok(CorpusChunk {
                    chunk_id: chunk_id(meta, index),
                    paper_title: meta.title.clone(),
                    authors: meta.authors.clone(),
                    year: meta.year,
                    section,
                    body: body.to_string(),
                    summary,
                    embedding: text_embedding(body),
                })
            })
            .collect()
    }
}

/// Heuristic ingestion of one document.
pub fn ingest_document(
    meta: &DocumentMeta,
    paragraphs: &[String],
) -> Result<Vec<CorpusChunk>, RagError> {
    Ingestor::heuristic().ingest(meta, paragraphs)
}

/// An immutable set of chunks, ordered by chunk id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    chunks: Vec<CorpusChunk>,
}

impl Corpus {
    pub fn new(chunks: Vec<CorpusChunk>) -> Result<Self, RagError> {
        let mut seen = HashSet::new();
        for c in &chunks {
            if !seen.insert(c.chunk_id.as_str()) {
                return Err(RagError::DuplicateChunk(c.chunk_id.clone()));
            }
        }
        let mut chunks = chunks;
        chunks.sort_by(|a, b| a.chunk_id.cmp(&b.chunk_id));
        Ok(Self { chunks })
    }

    /// Heuristic ingestion of every document.
    pub fn from_documents(docs: &[Document]) -> Result<Self, RagError> {
        let mut chunks = Vec::new();
        for d in docs {
            chunks.extend(ingest_document(&d.meta, &d.paragraphs)?);
        }
        Self::new(chunks)
    }

    /// Loads a `.jsonl` chunk file, or ingests a `.json` document list.
    pub fn load(path: &Path) -> Result<Self, RagError> {
        if path.extension().is_some_and(|e| e == "json") {
            let docs: Vec<Document> =
                serde_json::from_slice(&std::fs::read(path)?).map_err(|e| RagError::Corrupt {
                    line: e.line(),
                    message: e.to_string(),
                })?;
            return Self::from_documents(&docs);
        }
        let file = io::BufReader::new(std::fs::File::open(path)?);
        let mut chunks = Vec::new();
        for (i, line) in file.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let chunk: CorpusChunk =
                serde_json::from_str(&line).map_err(|e| RagError::Corrupt {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            chunks.push(chunk);
        }
        Self::new(chunks)
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<(), RagError> {
        let mut out = io::BufWriter::new(std::fs::File::create(path)?);
        for c in &self.chunks {
            serde_json::to_writer(&mut out, c).map_err(io::Error::other)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn chunks(&self) -> &[CorpusChunk] {
        &self.chunks
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }
}

/// Metadata filters; `section = All` and `None` fields impose nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filters {
    pub year: Option<i64>,
    pub author: Option<String>,
    pub section: SectionLabel,
    pub title: Option<String>,
}

impl Default for Filters {
    fn default() -> Self {
        Self {
            year: None,
            author: None,
            section: SectionLabel::All,
            title: None,
        }
    }
}

impl Filters {
    pub fn matches(&self, c: &CorpusChunk) -> bool {
        let contains =
            |hay: &str, needle: &str| hay.to_lowercase().contains(&needle.to_lowercase());
        self.year.is_none_or(|y| c.year == y)
            && (self.section == SectionLabel::All || c.section == self.section)
            && self
                .author
                .as_deref()
                .is_none_or(|a| c.authors.iter().any(|name| contains(name, a)))
            && self
                .title
                .as_deref()
                .is_none_or(|t| contains(&c.paper_title, t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiteratureQuery {
    pub query: String,
    pub k: usize,
    pub filters: Filters,
}

impl LiteratureQuery {
    pub fn new(query: impl Into<String>) -> Self {
        Self {
            query: query.into(),
            k: DEFAULT_K,
            filters: Filters::default(),
        }
    }

    pub fn k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn section(mut self, section: SectionLabel) -> Self {
        self.filters.section = section;
        self
    }
}

/// The text embedded for retrieval in place of the raw query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydeExpansion {
    pub text: String,
    pub fallback: bool,
    pub diagnostic: Option<String>,
}

pub fn hyde_expand(
    query: &str,
    provider: Option<&dyn ChatProvider>,
) -> Result<HydeExpansion, RagError> {
    if query.trim().is_empty() {
        return Err(RagError::EmptyQuery);
    }
    let fallback = |diagnostic: String| HydeExpansion {
        text: query.to_string(),
        fallback: true,
        diagnostic: Some(diagnostic),
    };
    Ok(match provider {
        None => fallback("no provider configured; embedding the raw query".into()),
        Some(p) => match ask(p, HYDE_PROMPT, query.to_string()) {
            Ok(text) if !text.is_empty() => HydeExpansion {
                text,
                fallback: false,
                diagnostic: None,
            },
            Ok(_) => fallback("provider returned an empty passage; embedding the raw query".into()),
            Err(e) => fallback(format!("provider failed ({e}); embedding the raw query")),
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit<'a> {
    pub chunk: &'a CorpusChunk,
    pub similarity: f64,
}

/// Top `k` chunks passing `filters`, by non-increasing cosine similarity
/// to `vector` and then ascending chunk id.
pub fn rank<'a>(corpus: &'a Corpus, filters: &Filters, vector: &[f64], k: usize) -> Vec<Hit<'a>> {
    let mut hits: Vec<Hit<'a>> = corpus
        .chunks
        .iter()
        .filter(|c| filters.matches(c))
        .map(|chunk| Hit {
            chunk,
            similarity: cosine_similarity(vector, &chunk.embedding),
        })
        .collect();
    hits.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.chunk.chunk_id.cmp(&b.chunk.chunk_id))
    });
    hits.truncate(k);
    hits
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval<'a> {
    pub expansion: HydeExpansion,
    pub hits: Vec<Hit<'a>>,
}

pub fn retrieve<'a>(
    corpus: &'a Corpus,
    q: &LiteratureQuery,
    provider: Option<&dyn ChatProvider>,
) -> Result<Retrieval<'a>, RagError> {
    if q.k == 0 {
        return Err(RagError::ZeroK);
    }
    let expansion = hyde_expand(&q.query, provider)?;
    let hits = rank(corpus, &q.filters, &text_embedding(&expansion.text), q.k);
    Ok(Retrieval { expansion, hits })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reference {
    pub number: usize,
    pub title: String,
    pub authors: Vec<String>,
    pub year: i64,
}

impl fmt::Display for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {} ({}). {}.",
            self.number,
            self.authors.join(", "),
            self.year,
            self.title
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synthesis {
    pub text: String,
    pub references: Vec<Reference>,
}

impl Synthesis {
    pub fn render(&self) -> String {
        if self.references.is_empty() {
            return self.text.clone();
        }
        let refs: Vec<String> = self.references.iter().map(Reference::to_string).collect();
        format!("{}\n\nReferences:\n{}", self.text, refs.join("\n"))
    }
}

/// Distinct papers among `hits`, numbered from 1 in rank order.
fn sources<'a>(hits: &[Hit<'a>]) -> Vec<(Reference, Vec<&'a CorpusChunk>)> {
    let mut out: Vec<(Reference, Vec<&'a CorpusChunk>)> = Vec::new();
    for h in hits {
        let c = h.chunk;
        match out
            .iter_mut()
            .find(|(r, _)| r.title == c.paper_title && r.authors == c.authors && r.year == c.year)
        {
            Some((_, chunks)) => chunks.push(c),
            None => {
                let number = out.len() + 1;
                out.push((
                    Reference {
                        number,
                        title: c.paper_title.clone(),
                        authors: c.authors.clone(),
                        year: c.year,
                    },
                    vec![c],
                ));
            }
        }
    }
    out
}

/// Numbers cited as `[n]` or `[n, m]` in `text`, in order of first use.
pub fn cited_numbers(text: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('[') {
        rest = &rest[open + 1..];
        let Some(close) = rest.find(']') else { break };
        let inner = &rest[..close];
        let nums: Option<Vec<usize>> = inner.split(',').map(|p| p.trim().parse().ok()).collect();
        if let Some(nums) = nums {
            for n in nums {
                if !out.contains(&n) {
                    out.push(n);
                }
            }
            rest = &rest[close + 1..];
        }
    }
    out
}

/// Checks citations against the numbered sources and builds the list.
pub fn validate_synthesis(text: &str, available: &[Reference]) -> Result<Synthesis, RagError> {
    let cited = cited_numbers(text);
    let bad: Vec<usize> = cited
        .iter()
        .copied()
        .filter(|n| *n == 0 || *n > available.len())
        .collect();
    if !bad.is_empty() {
        return Err(RagError::UnknownReference {
            cited: bad,
            available: available.len(),
        });
    }
    let used: BTreeSet<usize> = cited.into_iter().collect();
    Ok(Synthesis {
        text: text.to_string(),
        references: available
            .iter()
            .filter(|r| used.contains(&r.number))
            .cloned()
            .collect(),
    })
}

/// Referenced paragraph from the hits. Without a provider the paragraph is
/// extractive: one summary sentence per source paper.
pub fn synthesize(
    query: &str,
    hits: &[Hit<'_>],
    provider: Option<&dyn ChatProvider>,
) -> Result<Synthesis, RagError> {
    if hits.is_empty() {
        return Ok(Synthesis {
            text: NO_RESULTS.to_string(),
            references: Vec::new(),
        });
    }
    let sources = sources(hits);
    let refs: Vec<Reference> = sources.iter().map(|(r, _)| r.clone()).collect();
    let Some(provider) = provider else {
        let text = sources
            .iter()
            .map(|(r, chunks)| format!("{} [{}]", chunks[0].summary.trim_end(), r.number))
            .collect::<Vec<_>>()
            .join(" ");
        return validate_synthesis(&text, &refs);
    };
    let mut prompt = format!("Question: {query}\n\nSources:\n");
    for (r, chunks) in &sources {
        prompt.push_str(&format!("[{}] {} ({})\n", r.number, r.title, r.year));
        for c in chunks {
            prompt.push_str(&format!("  ({}) {}\n", c.section, c.body));
        }
    }
    let mut last_err = None;
    for _ in 0..2 {
        match ask(provider, SYNTHESIS_PROMPT, prompt.clone()) {
            Ok(text) => match validate_synthesis(&text, &refs) {
                Ok(s) => return Ok(s),
                Err(e) => last_err = Some(e),
            },
            Err(e) => last_err = Some(e.into()),
        }
    }
    Err(last_err.expect("two attempts ran"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{Script, ScriptEntry, ScriptedProvider};

    fn meta() -> DocumentMeta {
        DocumentMeta {
            title: "Team size and disruption".into(),
            authors: vec!["Lingfei Wu".into(), "Dashun Wang".into()],
            year: 2019,
        }
    }

    fn scripted(texts: &[&str]) -> ScriptedProvider {
        ScriptedProvider::new(Script::new(
            texts.iter().map(|t| ScriptEntry::text(*t)).collect(),
        ))
    }

    #[test]
    fn labels_parse_and_print_exactly() {
        for l in SectionLabel::LABELS {
            assert_eq!(l.as_str().parse::<SectionLabel>().unwrap(), l);
            assert_eq!(
                serde_json::to_string(&l).unwrap(),
                format!("\"{}\"", l.as_str())
            );
        }
        assert!("related works".parse::<SectionLabel>().is_err());
        assert_eq!(SectionLabel::stored().count(), 9);
    }

    #[test]
    fn heuristic_rules() {
        assert_eq!(
            heuristic_section("Abstract—We study teams."),
            SectionLabel::Abstract
        );
        assert_eq!(
            heuristic_section("2. Methods and data. We use"),
            SectionLabel::Methodology
        );
        assert_eq!(
            heuristic_section("## Related work\nPrior"),
            SectionLabel::RelatedWorks
        );
        assert_eq!(
            heuristic_section("Acknowledgements. We thank"),
            SectionLabel::Acknowledgement
        );
        assert_eq!(heuristic_section("Teams matter."), SectionLabel::Discussion);
        assert_eq!(heuristic_summary("One. Two? Three."), "One. Two?");
        assert_eq!(heuristic_summary("Only one sentence"), "Only one sentence");
        assert_eq!(
            heuristic_summary("Value 3.5 rises. Then. More."),
            "Value 3.5 rises. Then."
        );
    }

    #[test]
    fn ingestion_keeps_order_and_labels() {
        let paras: Vec<String> = [
            "Abstract—Small teams disrupt.",
            "Introduction. Teams grew.",
            "Plain text.",
        ]
        .map(String::from)
        .to_vec();
        let chunks = ingest_document(&meta(), &paras).unwrap();
        assert_eq!(chunks.len(), 3);
        assert_eq!(
            chunks.iter().map(|c| c.section).collect::<Vec<_>>(),
            [
                SectionLabel::Abstract,
                SectionLabel::Introduction,
                SectionLabel::Discussion
            ]
        );
        assert!(chunks
            .iter()
            .zip(&paras)
            .all(|(c, p)| &c.body == p && !c.summary.is_empty()));
        assert_eq!(chunks, ingest_document(&meta(), &paras).unwrap());
        assert!(matches!(
            ingest_document(&meta(), &[]),
            Err(RagError::NoParagraphs(_))
        ));
    }

    #[test]
    fn scripted_classifier_labels_in_order() {
        let p = scripted(&["Methodology", "Results.", " discussion "]);
        let paras: Vec<String> = ["a b", "c d", "e f"].map(String::from).to_vec();
        let chunks = Ingestor::heuristic()
            .with_classifier(&p)
            .ingest(&meta(), &paras)
            .unwrap();
        assert_eq!(
            chunks.iter().map(|c| c.section).collect::<Vec<_>>(),
            [
                SectionLabel::Methodology,
                SectionLabel::Results,
                SectionLabel::Discussion
            ]
        );
        let bad = scripted(&["Everything"]);
        assert!(matches!(
            Ingestor::heuristic()
                .with_classifier(&bad)
                .ingest(&meta(), &paras[..1]),
            Err(RagError::BadLabel(_))
        ));
    }

    #[test]
    fn hyde_passthrough_and_fallback() {
        let p = scripted(&["Hypothetical passage about teams."]);
        let e = hyde_expand("why teams?", Some(&p)).unwrap();
        assert_eq!(
            (e.text.as_str(), e.fallback),
            ("Hypothetical passage about teams.", false)
        );
        let e = hyde_expand("why teams?", None).unwrap();
        assert_eq!((e.text.as_str(), e.fallback), ("why teams?", true));
        assert!(e.diagnostic.is_some());
        let exhausted = scripted(&[]);
        assert!(hyde_expand("q", Some(&exhausted)).unwrap().fallback);
        assert!(matches!(hyde_expand("  ", None), Err(RagError::EmptyQuery)));
    }

    fn corpus() -> Corpus {
        let paras: Vec<String> = [
            "Abstract—Small teams disrupt science.",
            "Results. Large teams develop.",
        ]
        .map(String::from)
        .to_vec();
        Corpus::new(ingest_document(&meta(), &paras).unwrap()).unwrap()
    }

    #[test]
    fn synthesis_references_only_hits() {
        let c = corpus();
        let none = synthesize("q", &[], None).unwrap();
        assert_eq!((none.text.as_str(), none.references.len()), (NO_RESULTS, 0));

        let hits = rank(&c, &Filters::default(), &text_embedding("teams"), 1);
        let p = scripted(&["Small teams disrupt [1]."]);
        let s = synthesize("q", &hits, Some(&p)).unwrap();
        assert_eq!(s.references.len(), 1);
        assert_eq!(s.references[0].title, "Team size and disruption");

        let p = scripted(&["Bad [2].", "Still bad [3]."]);
        assert!(matches!(
            synthesize("q", &hits, Some(&p)),
            Err(RagError::UnknownReference { available: 1, .. })
        ));
        let p = scripted(&["Bad [2].", "Fixed [1]."]);
        assert!(synthesize("q", &hits, Some(&p)).is_ok());
    }

    #[test]
    fn extractive_synthesis_groups_chunks_by_paper() {
        let c = corpus();
        let hits = rank(&c, &Filters::default(), &text_embedding("teams"), 10);
        assert_eq!(hits.len(), 2);
        let s = synthesize("q", &hits, None).unwrap();
        assert_eq!(s.references.len(), 1);
        assert_eq!(cited_numbers(&s.text), [1]);
        assert!(s
            .render()
            .contains("References:\n[1] Lingfei Wu, Dashun Wang (2019)."));
    }

    #[test]
    fn citation_scanner() {
        assert_eq!(cited_numbers("a [1] b [2, 3] c [x] [1]"), [1, 2, 3]);
        assert_eq!(cited_numbers("no refs"), Vec::<usize>::new());
    }

    #[test]
    fn jsonl_round_trip() {
        let c = corpus();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        c.save_jsonl(&path).unwrap();
        assert_eq!(Corpus::load(&path).unwrap(), c);
        std::fs::write(&path, "{not json}\n").unwrap();
        assert!(matches!(
            Corpus::load(&path),
            Err(RagError::Corrupt { line: 1, .. })
        ));
    }
}

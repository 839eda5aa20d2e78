//! The scholarly schema: 19 tables with their column types, keys and
//! descriptions.

/// Column types as the schema declares them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnType {
    Int64,
    Float64,
    String,
    Bool,
    Float64Array,
}

impl ColumnType {
    /// The declared type name shown to agents.
    pub fn declared(self) -> &'static str {
        match self {
            ColumnType::Int64 => "INT64",
            ColumnType::Float64 => "FLOAT64",
            ColumnType::String => "STRING",
            ColumnType::Bool => "BOOL",
            ColumnType::Float64Array => "ARRAY<FLOAT64>",
        }
    }

    /// Storage type in the embedded engine.
    pub(crate) fn sqlite(self) -> &'static str {
        match self {
            ColumnType::Int64 | ColumnType::Bool => "INTEGER",
            ColumnType::Float64 => "REAL",
            ColumnType::String => "TEXT",
            ColumnType::Float64Array => "BLOB",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnSpec {
    pub name: &'static str,
    pub ty: ColumnType,
    pub not_null: bool,
    pub description: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForeignKey {
    pub column: &'static str,
    pub table: &'static str,
    pub references: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableSpec {
    pub name: &'static str,
    pub description: &'static str,
    pub columns: &'static [ColumnSpec],
    pub primary_key: Option<&'static str>,
    pub foreign_keys: &'static [ForeignKey],
}

impl TableSpec {
    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Columns that order sample rows: the primary key, or every key
    /// column of a link table.
    pub fn order_columns(&self) -> Vec<&'static str> {
        match self.primary_key {
            Some(pk) => vec![pk],
            None => self.foreign_keys.iter().map(|fk| fk.column).collect(),
        }
    }
}

pub fn table(name: &str) -> Option<&'static TableSpec> {
    TABLES.iter().find(|t| t.name == name)
}

const fn col(
    name: &'static str,
    ty: ColumnType,
    not_null: bool,
    description: &'static str,
) -> ColumnSpec {
    ColumnSpec {
        name,
        ty,
        not_null,
        description,
    }
}

const fn fk(column: &'static str, table: &'static str, references: &'static str) -> ForeignKey {
    ForeignKey {
        column,
        table,
        references,
    }
}

use ColumnType::*;

/// Every table, alphabetical by name.
pub static TABLES: [TableSpec; 19] = [
    TableSpec {
        name: "authors",
        description: "Each author's id, name and gender.",
        columns: &[
            col("author_id", Int64, true, "(Primary Key) Author Unique Identifier"),
            col("author_name", String, false, "Author's name"),
            col("author_gender", String, false, "Author's gender. Options include 'male', 'female', and 'unknown'."),
        ],
        primary_key: Some("author_id"),
        foreign_keys: &[],
    },
    TableSpec {
        name: "fields",
        description: "Each research field's id, name and field level.",
        columns: &[
            col("field_id", Int64, true, "(Primary Key) A unique identifier for each field"),
            col("field_name", String, false, "The name of the research field"),
            col("field_level", String, false, "The level of the research field, categorizing it as either 'top' or 'sub'"),
        ],
        primary_key: Some("field_id"),
        foreign_keys: &[],
    },
    TableSpec {
        name: "institutions",
        description: "Each institution's id, name, webpage url, and geographical coordinate.",
        columns: &[
            col("institution_id", Int64, true, "(Primary Key) A unique identifier for each institution."),
            col("institution_name", String, false, "Official name of the institution"),
            col("grid_id", String, false, "Global Research Identifier Database (GRID) ID of the institution"),
            col("url", String, false, "Official webpage URL of the institution"),
            col("latitude", Float64, false, "Geographical latitude of the institution"),
            col("longitude", Float64, false, "Geographical longitude of the institution"),
        ],
        primary_key: Some("institution_id"),
        foreign_keys: &[],
    },
    TableSpec {
        name: "nct",
        description: "Each clinical trial's id.",
        columns: &[
            col("nct_id", String, true, "(Primary Key) A unique identifier for each clinical trial"),
        ],
        primary_key: Some("nct_id"),
        foreign_keys: &[],
    },
    TableSpec {
        name: "newsfeed",
        description: "Each newsfeed's id, date and title.",
        columns: &[
            col("newsfeed_id", String, true, "(Primary Key) A unique identifier for each newsfeed, which is also its URL"),
            col("date", String, false, "The date of the newsfeed"),
            col("title", String, false, "The title of the newsfeed"),
        ],
        primary_key: Some("newsfeed_id"),
        foreign_keys: &[],
    },
    TableSpec {
        name: "nih",
        description: "Each national institutes of health (NIH) project's id.",
        columns: &[
            col("nih_project_id", String, true, "(Primary Key) A unique identifier for each NIH project"),
        ],
        primary_key: Some("nih_project_id"),
        foreign_keys: &[],
    },
    TableSpec {
        name: "nsf",
        description: "Each national science foundation (NSF) funding's id, date and title.",
        columns: &[
            col("nsf_award_id", String, true, "(Primary Key) A unique identifier for each NSF funding"),
            col("date", String, false, "The date of the NSF award"),
            col("title", String, false, "The title of the NSF award"),
        ],
        primary_key: Some("nsf_award_id"),
        foreign_keys: &[],
    },
    TableSpec {
        name: "paper_author_affiliations",
        description: "Many-to-many-to-many relationships between papers, authors, and their affiliated institutions.",
        columns: &[
            col("paper_id", Int64, true, "(Foreign Key) Links to papers"),
            col("author_id", Int64, true, "(Foreign Key) Links to authors"),
            col("institution_id", Int64, false, "(Foreign Key) Links to institutions"),
            col("author_order", Int64, true, "Numeric order representing the author's position in the list of authors for the paper"),
        ],
        primary_key: None,
        foreign_keys: &[
            fk("paper_id", "papers", "paper_id"),
            fk("author_id", "authors", "author_id"),
            fk("institution_id", "institutions", "institution_id"),
        ],
    },
    TableSpec {
        name: "paper_citations",
        description: "Many-to-many citation relationships between papers.",
        columns: &[
            col("citing_paper_id", Int64, true, "(Foreign Key) Links to citing paper"),
            col("cited_paper_id", Int64, true, "(Foreign Key) Links to cited paper"),
        ],
        primary_key: None,
        foreign_keys: &[
            fk("citing_paper_id", "papers", "paper_id"),
            fk("cited_paper_id", "papers", "paper_id"),
        ],
    },
    TableSpec {
        name: "paper_fields",
        description: "Many-to-many relationships between papers and their research fields.",
        columns: &[
            col("paper_id", Int64, true, "(Foreign Key) Links to papers"),
            col("field_id", Int64, true, "(Foreign Key) Links to fields"),
            col("is_hit_1pct", Bool, true, "If the paper is in top 1% cited papers within its field and publication year"),
            col("is_hit_5pct", Bool, true, "If the paper is in top 5% cited papers within its field and publication year"),
            col("is_hit_10pct", Bool, true, "If the paper is in top 10% cited papers within its field and publication year"),
            col("normalized_citations", Float64, false, "Number of citations normalized by field and year"),
        ],
        primary_key: None,
        foreign_keys: &[
            fk("paper_id", "papers", "paper_id"),
            fk("field_id", "fields", "field_id"),
        ],
    },
    TableSpec {
        name: "paper_nct",
        description: "Many-to-many relationships between papers and clinical trials.",
        columns: &[
            col("paper_id", Int64, true, "(Foreign Key) Links to papers"),
            col("nct_id", String, true, "(Foreign Key) Links to clinical trials"),
        ],
        primary_key: None,
        foreign_keys: &[
            fk("paper_id", "papers", "paper_id"),
            fk("nct_id", "nct", "nct_id"),
        ],
    },
    TableSpec {
        name: "paper_newsfeed",
        description: "Many-to-many relationships between papers and newsfeeds.",
        columns: &[
            col("paper_id", Int64, true, "(Foreign Key) Links to papers"),
            col("newsfeed_id", String, true, "(Foreign Key) Links to newsfeeds"),
        ],
        primary_key: None,
        foreign_keys: &[
            fk("paper_id", "papers", "paper_id"),
            fk("newsfeed_id", "newsfeed", "newsfeed_id"),
        ],
    },
    TableSpec {
        name: "paper_nih",
        description: "Many-to-many relationships between papers and National Institutes of Health (NIH) projects.",
        columns: &[
            col("paper_id", Int64, true, "(Foreign Key) Links to papers"),
            col("nih_project_id", String, true, "(Foreign Key) Links to NIH projects"),
        ],
        primary_key: None,
        foreign_keys: &[
            fk("paper_id", "papers", "paper_id"),
            fk("nih_project_id", "nih", "nih_project_id"),
        ],
    },
    TableSpec {
        name: "paper_nsf",
        description: "Many-to-many relationships between papers and National Science Foundation (NSF) awards.",
        columns: &[
            col("paper_id", Int64, true, "(Foreign Key) Links to papers"),
            col("nsf_award_id", String, true, "(Foreign Key) Links to NSF awards"),
        ],
        primary_key: None,
        foreign_keys: &[
            fk("paper_id", "papers", "paper_id"),
            fk("nsf_award_id", "nsf", "nsf_award_id"),
        ],
    },
    TableSpec {
        name: "paper_patents",
        description: "Many-to-many relationships between papers and their patent citations.",
        columns: &[
            col("paper_id", Int64, true, "(Foreign Key) Links to cited papers"),
            col("patent_id", String, true, "(Foreign Key) Links to citing patents"),
        ],
        primary_key: None,
        foreign_keys: &[
            fk("paper_id", "papers", "paper_id"),
            fk("patent_id", "patents", "patent_id"),
        ],
    },
    TableSpec {
        name: "paper_twitter",
        description: "Many-to-many relationships between papers and tweets.",
        columns: &[
            col("paper_id", Int64, true, "(Foreign Key) Links to papers"),
            col("tweet_id", Int64, true, "(Foreign Key) Links to tweets"),
        ],
        primary_key: None,
        foreign_keys: &[
            fk("paper_id", "papers", "paper_id"),
            fk("tweet_id", "twitter", "tweet_id"),
        ],
    },
    TableSpec {
        name: "papers",
        description: "Each paper's id, publication time, authorship, venue, title, impact metrics, title, abstract, embeddings, and many other details",
        columns: &[
            col("paper_id", Int64, false, "(Primary Key) Paper Unique Identifier"),
            col("doi", String, false, "Digital Object Identifier"),
            col("doc_type", String, false, "Document type. Options include Conference, Journal, Thesis, Book, BookChapter, Repository, Dataset"),
            col("year", Int64, false, "Publication year"),
            col("date", String, false, "Publication date"),
            col("author_count", Int64, false, "Number of authors"),
            col("institution_count", Int64, false, "Number of institutions the authors are affiliated with"),
            col("journal_id", Int64, false, "Journal Unique Identifier in which the paper is published, if applicable"),
            col("journal_name", String, false, "Journal name"),
            col("journal_issn", String, false, "Journal ISSN code"),
            col("journal_publisher", String, false, "Journal publisher"),
            col("journal_url", String, false, "Journal web URL"),
            col("conference_id", Int64, false, "Conference Unique Identifier, if applicable"),
            col("conference_abbr_name", String, false, "Conference abbreviated name"),
            col("conference_name", String, false, "Conference name"),
            col("citation_count", Int64, false, "Total number of citations received by the paper"),
            col("citation_count_pct", Float64, false, "The percentile ranking for citation_count, ranging from 0-100"),
            col("citation_count_10y", Int64, false, "Number of citations received within 10 years of publication"),
            col("citation_count_5y", Int64, false, "Number of citations received within 5 years of publication"),
            col("reference_count", Int64, false, "Number of references cited by the paper"),
            col("disruption_score", Float64, false, "Disruption score indicating the paper's impact in displacing prior work in its field. Its value spans from -1.0 to 1.0, with higher values indicating more disruption"),
            col("disruption_score_pct", Float64, false, "The percentile ranking for disruption_score, ranging from 0-100"),
            col("novelty_score", Float64, false, "Novelty score, based on the top 10 percentile of Z-score of reference pairs, representing the paper's atypicality in terms of knowledge combination. Lower values indicate higher novelty"),
            col("novelty_score_pct", Float64, false, "The percentile ranking for novelty_score, ranging from 0-100"),
            col("conventionality_score", Float64, false, "Conventionality score, based on the median percentile of Z-score of reference pairs, representing the paper's conventionality in terms of knowledge combination. Higher values indicate higher conventionality"),
            col("conventionality_score_pct", Float64, false, "The percentile ranking for conventionality_score, ranging from 0-100"),
            col("title", String, false, "Paper title"),
            col("abstract", String, false, "Paper abstract"),
            col("abstract_embedding", Float64Array, false, "Paper abstract embedding. A 768-dimensional dense vector, generated by the TEXT_EMBEDDING function, which captures the semantic meaning of the text."),
        ],
        primary_key: Some("paper_id"),
        foreign_keys: &[],
    },
    TableSpec {
        name: "patents",
        description: "Each patent's id, type, date, year, title, abstract, and embeddings.",
        columns: &[
            col("patent_id", String, true, "(Primary Key) patent Unique Identifier"),
            col("type", String, false, "The type of patent (e.g. utility)"),
            col("date", String, false, "The date the patent was granted"),
            col("year", Int64, false, "The year the patent was granted"),
            col("title", String, false, "patent title"),
            col("abstract", String, false, "patent abstract"),
            col("abstract_embedding", Float64Array, false, "patent abstract embedding"),
        ],
        primary_key: Some("patent_id"),
        foreign_keys: &[],
    },
    TableSpec {
        name: "twitter",
        description: "Each tweet's id, date and URL.",
        columns: &[
            col("tweet_id", Int64, true, "(Primary Key) A unique identifier for each tweet"),
            col("date", String, false, "The date of the tweet"),
            col("url", String, false, "The URL of the tweet"),
        ],
        primary_key: Some("tweet_id"),
        foreign_keys: &[],
    },
];

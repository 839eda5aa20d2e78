//! Embedded scholarly data lake: the 19-table schema in an in-process SQL
//! engine, with query artifacts, text embeddings, vector search and a name
//! index.
//!
//! After loading, the lake is read-only. Queries run on a small pool of
//! connections to one shared in-memory database, so reads are concurrent.

pub mod catalog;
pub mod embedding;
mod load;
pub mod names;
mod sql;

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::path::Path;
use std::sync::Arc;

use base64::Engine as _;
use crossbeam::channel::{self, Receiver, Sender};
use parking_lot::Mutex;
use rusqlite::types::Value;
use rusqlite::{Connection, OpenFlags};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifacts::ArtifactStore;
use crate::table::markdown_table;
use catalog::{ColumnType, TableSpec, TABLES};
use embedding::EMBEDDING_DIM;
use load::quote_ident;
use names::{NameCandidate, NameColumn, NameIndex};

pub use embedding::{cosine_distance, cosine_similarity, text_embedding};
pub use names::{InvalidNameColumn, NameMatch, NAME_SEARCH_LIMIT};
pub use sql::{RowKey, VectorIndex, VectorSearchError};

const POOL_SIZE: usize = 4;
pub const DEFAULT_DISPLAY_ROWS: usize = 10;
const SAMPLE_ROWS: usize = 3;

#[derive(Debug, Error)]
pub enum LakeError {
    #[error("fixture is missing table `{table}`")]
    MissingTable { table: String },
    #[error("table `{table}` has columns {found:?}, expected {expected:?}")]
    ColumnMismatch {
        table: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("table `{table}` line {line}, column `{column}`: {message}")]
    BadValue {
        table: String,
        line: u64,
        column: String,
        message: String,
    },
    #[error("table `{table}` line {line}: duplicate primary key")]
    DuplicateKey { table: String, line: u64 },
    #[error("table `{table}` column `{column}` references missing {references} = {value}")]
    DanglingForeignKey {
        table: String,
        column: String,
        value: String,
        references: String,
    },
    #[error("cannot read table `{table}`: {message}")]
    Csv { table: String, message: String },
    #[error("unknown table(s): {}", .0.join(", "))]
    UnknownTables(Vec<String>),
    #[error(transparent)]
    VectorSearch(#[from] VectorSearchError),
    #[error(transparent)]
    NameColumn(#[from] InvalidNameColumn),
    #[error("engine error: {0}")]
    Engine(String),
}

impl From<rusqlite::Error> for LakeError {
    fn from(e: rusqlite::Error) -> Self {
        LakeError::Engine(e.to_string())
    }
}

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("{0}")]
    Syntax(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Runtime(String),
    #[error("only read-only queries are supported")]
    NotReadOnly,
    #[error("display_rows must be a positive integer")]
    DisplayRows,
    #[error("cannot write query artifact: {0}")]
    Artifact(#[from] io::Error),
}

impl QueryError {
    fn from_prepare(e: rusqlite::Error) -> Self {
        match e {
            rusqlite::Error::MultipleStatement => {
                QueryError::Invalid("only one statement per query is supported".into())
            }
            rusqlite::Error::SqliteFailure(_, Some(msg))
            | rusqlite::Error::SqlInputError { msg, .. }
                if msg.contains("syntax error") || msg.contains("incomplete input") =>
            {
                QueryError::Syntax(msg)
            }
            rusqlite::Error::SqliteFailure(_, Some(msg))
            | rusqlite::Error::SqlInputError { msg, .. } => QueryError::Invalid(msg),
            other => QueryError::Invalid(other.to_string()),
        }
    }

    fn from_step(e: rusqlite::Error) -> Self {
        match e {
            rusqlite::Error::SqliteFailure(_, Some(msg)) => QueryError::Runtime(msg),
            other => QueryError::Runtime(other.to_string()),
        }
    }
}

/// Outcome of [`DataLake::run_query`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryResult {
    pub columns: Vec<String>,
    /// Storage class per column: INTEGER, REAL, TEXT, BLOB, or NULL when
    /// every value is null.
    pub column_types: Vec<String>,
    /// The first rows, rendered exactly as in the artifact.
    pub preview: Vec<Vec<String>>,
    pub total_rows: usize,
    /// Artifact file name holding the complete result as CSV.
    pub artifact: String,
}

impl QueryResult {
    pub fn to_markdown(&self) -> String {
        markdown_table(&self.columns, &self.preview, self.total_rows)
    }
}

/// Column sidecar written next to each query artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactSchema {
    pub columns: Vec<ArtifactColumn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactColumn {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
}

/// Name of the schema sidecar for a CSV artifact.
pub fn sidecar_name(artifact: &str) -> String {
    format!(
        "{}.schema.json",
        artifact.strip_suffix(".csv").unwrap_or(artifact)
    )
}

/// Schema and sample rows of one table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableSchema {
    pub spec: &'static TableSpec,
    pub sample_rows: Vec<Vec<String>>,
}

impl TableSchema {
    pub fn to_text(&self) -> String {
        let mut out = format!("CREATE TABLE `{}` (\n", self.spec.name);
        let cols: Vec<String> = self
            .spec
            .columns
            .iter()
            .map(|c| {
                format!(
                    "  `{}` {}{} OPTIONS(description={})",
                    c.name,
                    c.ty.declared(),
                    if c.not_null { " NOT NULL" } else { "" },
                    sql_quote(c.description)
                )
            })
            .collect();
        out.push_str(&cols.join(",\n"));
        out.push_str(&format!(
            "\n) OPTIONS(description={})\n\n/*\n{} rows from {} table:\n",
            sql_quote(self.spec.description),
            self.sample_rows.len(),
            self.spec.name
        ));
        let names: Vec<String> = self
            .spec
            .columns
            .iter()
            .map(|c| c.name.to_string())
            .collect();
        out.push_str(&markdown_table(
            &names,
            &self.sample_rows,
            self.sample_rows.len(),
        ));
        out.push_str("\n*/\n");
        out
    }
}

fn sql_quote(s: &str) -> String {
    if s.contains('\'') {
        format!("\"{s}\"")
    } else {
        format!("'{s}'")
    }
}

/// Text form of an engine value, shared by previews and artifacts.
pub fn render_value(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Integer(i) => i.to_string(),
        Value::Real(x) => render_float(*x),
        Value::Text(s) => s.clone(),
        Value::Blob(b) => match embedding::from_blob(b).filter(|v| v.len() == EMBEDDING_DIM) {
            Some(v) => serde_json::to_string(&v).expect("finite floats"),
            None => format!(
                "base64:{}",
                base64::engine::general_purpose::STANDARD.encode(b)
            ),
        },
    }
}

fn render_float(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let a = x.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{x:e}")
    } else if x.fract() == 0.0 {
        format!("{x:.1}")
    } else {
        x.to_string()
    }
}

fn storage_class(v: &Value) -> &'static str {
    match v {
        Value::Null => "NULL",
        Value::Integer(_) => "INTEGER",
        Value::Real(_) => "REAL",
        Value::Text(_) => "TEXT",
        Value::Blob(_) => "BLOB",
    }
}

struct Pool {
    tx: Sender<Connection>,
    rx: Receiver<Connection>,
    // keeps the shared in-memory database alive
    _keeper: Mutex<Connection>,
}

struct Lease<'a> {
    conn: Option<Connection>,
    pool: &'a Pool,
}

impl std::ops::Deref for Lease<'_> {
    type Target = Connection;
    fn deref(&self) -> &Connection {
        self.conn.as_ref().expect("leased")
    }
}

impl Drop for Lease<'_> {
    fn drop(&mut self) {
        if let Some(c) = self.conn.take() {
            let _ = self.pool.tx.send(c);
        }
    }
}

impl Pool {
    fn lease(&self) -> Lease<'_> {
        Lease {
            conn: Some(self.rx.recv().expect("pool sender lives in self")),
            pool: self,
        }
    }
}

/// A loaded, read-only data lake.
pub struct DataLake {
    tables: Vec<&'static TableSpec>,
    pool: Pool,
    vectors: Arc<VectorIndex>,
    names: NameIndex,
}

impl fmt::Debug for DataLake {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DataLake")
            .field(
                "tables",
                &self.tables.iter().map(|t| t.name).collect::<Vec<_>>(),
            )
            .finish_non_exhaustive()
    }
}

fn open_shared(uri: &str) -> rusqlite::Result<Connection> {
    Connection::open_with_flags(
        uri,
        OpenFlags::SQLITE_OPEN_READ_WRITE
            | OpenFlags::SQLITE_OPEN_CREATE
            | OpenFlags::SQLITE_OPEN_URI
            | OpenFlags::SQLITE_OPEN_SHARED_CACHE
            | OpenFlags::SQLITE_OPEN_NO_MUTEX,
    )
}

impl DataLake {
    /// A lake with no tables.
    pub fn empty() -> Result<Self, LakeError> {
        Self::build(|_| Ok(Vec::new()))
    }

    /// Loads every table from `<dir>/<table>.csv` and validates foreign keys.
    pub fn load_fixture(dir: impl AsRef<Path>) -> Result<Self, LakeError> {
        let dir = dir.as_ref();
        Self::build(|conn| {
            for spec in TABLES.iter() {
                load::create_table(conn, spec)?;
                load::load_table(conn, dir, spec)?;
            }
            for spec in TABLES.iter() {
                load::check_foreign_keys(conn, spec)?;
            }
            Ok(TABLES.iter().collect())
        })
    }

    fn build(
        fill: impl FnOnce(&Connection) -> Result<Vec<&'static TableSpec>, LakeError>,
    ) -> Result<Self, LakeError> {
        let uri = format!(
            "file:copilot-lake-{}?mode=memory&cache=shared",
            uuid::Uuid::new_v4()
        );
        let keeper = open_shared(&uri)?;
        let tables = fill(&keeper)?;

        let mut vectors = VectorIndex::default();
        let mut names = NameIndex::default();
        for spec in &tables {
            for col in spec
                .columns
                .iter()
                .filter(|c| c.ty == ColumnType::Float64Array)
            {
                let pk = spec
                    .primary_key
                    .expect("embedding tables have a primary key");
                let mut stmt = keeper.prepare(&format!(
                    "SELECT {}, {} FROM {} WHERE {} IS NOT NULL",
                    quote_ident(pk),
                    quote_ident(col.name),
                    quote_ident(spec.name),
                    quote_ident(col.name)
                ))?;
                let rows = stmt
                    .query_map([], |r| {
                        let key = match r.get::<_, Value>(0)? {
                            Value::Integer(i) => RowKey::Int(i),
                            other => RowKey::Text(render_value(&other)),
                        };
                        let blob: Vec<u8> = r.get(1)?;
                        Ok((key, embedding::from_blob(&blob).unwrap_or_default()))
                    })?
                    .collect::<Result<Vec<_>, _>>()?;
                vectors.insert(spec.name, col.name, rows);
            }
        }
        for column in [NameColumn::FieldName, NameColumn::InstitutionName] {
            let (table, id_col) = column.source();
            if !tables.iter().any(|t| t.name == table) {
                continue;
            }
            let mut stmt = keeper.prepare(&format!(
                "SELECT * FROM {} ORDER BY {}",
                quote_ident(table),
                quote_ident(id_col)
            ))?;
            let col_names: Vec<String> =
                stmt.column_names().iter().map(|s| s.to_string()).collect();
            let candidates = stmt
                .query_map([], |r| {
                    let mut metadata = BTreeMap::new();
                    for (i, name) in col_names.iter().enumerate() {
                        metadata.insert(name.clone(), render_value(&r.get::<_, Value>(i)?));
                    }
                    Ok(metadata)
                })?
                .filter_map(|m| {
                    let m = m.ok()?;
                    Some(NameCandidate {
                        id: m.get(id_col)?.parse().ok()?,
                        name: m.get(column.as_str())?.clone(),
                        metadata: m,
                    })
                })
                .collect();
            names.insert(column, candidates);
        }

        let vectors = Arc::new(vectors);
        let (tx, rx) = channel::bounded(POOL_SIZE);
        for _ in 0..POOL_SIZE {
            let conn = open_shared(&uri)?;
            sql::register(&conn, Arc::clone(&vectors))?;
            conn.pragma_update(None, "query_only", true)?;
            tx.send(conn).expect("capacity reserved");
        }
        Ok(Self {
            tables,
            pool: Pool {
                tx,
                rx,
                _keeper: Mutex::new(keeper),
            },
            vectors,
            names,
        })
    }

    /// `(name, description)` per table, alphabetical.
    pub fn list_tables(&self) -> Vec<(&'static str, &'static str)> {
        let mut out: Vec<_> = self
            .tables
            .iter()
            .map(|t| (t.name, t.description))
            .collect();
        out.sort();
        out
    }

    pub fn table(&self, name: &str) -> Option<&'static TableSpec> {
        self.tables.iter().copied().find(|t| t.name == name)
    }

    /// Schemas for a comma-separated list of tables; empty means all.
    pub fn schema(&self, names: &str) -> Result<Vec<TableSchema>, LakeError> {
        let requested: Vec<&str> = names
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        let specs: Vec<&'static TableSpec> = if requested.is_empty() {
            self.list_tables()
                .iter()
                .filter_map(|(n, _)| self.table(n))
                .collect()
        } else {
            let unknown: Vec<String> = requested
                .iter()
                .filter(|n| self.table(n).is_none())
                .map(|s| s.to_string())
                .collect();
            if !unknown.is_empty() {
                return Err(LakeError::UnknownTables(unknown));
            }
            requested.iter().filter_map(|n| self.table(n)).collect()
        };
        let conn = self.pool.lease();
        specs
            .into_iter()
            .map(|spec| {
                let order: Vec<String> = spec
                    .order_columns()
                    .iter()
                    .map(|c| quote_ident(c))
                    .collect();
                let mut stmt = conn.prepare(&format!(
                    "SELECT * FROM {} ORDER BY {} LIMIT {SAMPLE_ROWS}",
                    quote_ident(spec.name),
                    order.join(", ")
                ))?;
                let n = spec.columns.len();
                let sample_rows = stmt
                    .query_map([], |r| {
                        (0..n)
                            .map(|i| {
                                let v: Value = r.get(i)?;
                                Ok(match (&v, spec.columns[i].ty) {
                                    (Value::Blob(_), ColumnType::Float64Array) => {
                                        format!("[{EMBEDDING_DIM}-d vector]")
                                    }
                                    _ => render_value(&v),
                                })
                            })
                            .collect::<rusqlite::Result<Vec<String>>>()
                    })?
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(TableSchema { spec, sample_rows })
            })
            .collect()
    }

    /// The `sql_get_schema` text for a comma-separated table list.
    pub fn get_schema(&self, names: &str) -> Result<String, LakeError> {
        Ok(self
            .schema(names)?
            .iter()
            .map(TableSchema::to_text)
            .collect::<Vec<_>>()
            .join("\n\n"))
    }

    /// Runs a read-only query, writing the full result to a fresh CSV
    /// artifact (plus a `.schema.json` sidecar) and returning a preview.
    pub fn run_query(
        &self,
        sql: &str,
        display_rows: usize,
        artifacts: &ArtifactStore,
    ) -> Result<QueryResult, QueryError> {
        if display_rows == 0 {
            return Err(QueryError::DisplayRows);
        }
        let conn = self.pool.lease();
        let mut stmt = conn.prepare(sql).map_err(QueryError::from_prepare)?;
        if !stmt.readonly() {
            return Err(QueryError::NotReadOnly);
        }
        let columns: Vec<String> = stmt.column_names().iter().map(|s| s.to_string()).collect();
        let mut column_types = vec!["NULL"; columns.len()];

        let artifact = artifacts.fresh_name("csv");
        let mut writer =
            csv::Writer::from_path(artifacts.path(&artifact)).map_err(io::Error::other)?;
        writer.write_record(&columns).map_err(io::Error::other)?;

        let mut preview = Vec::new();
        let mut total_rows = 0;
        let mut rows = stmt.query([]).map_err(QueryError::from_step)?;
        while let Some(row) = rows.next().map_err(QueryError::from_step)? {
            let mut cells = Vec::with_capacity(columns.len());
            for (i, ty) in column_types.iter_mut().enumerate() {
                let v: Value = row.get(i).map_err(QueryError::from_step)?;
                if *ty == "NULL" {
                    *ty = storage_class(&v);
                }
                cells.push(render_value(&v));
            }
            writer.write_record(&cells).map_err(io::Error::other)?;
            if preview.len() < display_rows {
                preview.push(cells);
            }
            total_rows += 1;
        }
        writer.flush()?;
        let column_types: Vec<String> = column_types.iter().map(|s| s.to_string()).collect();
        let sidecar = ArtifactSchema {
            columns: columns
                .iter()
                .zip(&column_types)
                .map(|(n, t)| ArtifactColumn {
                    name: n.clone(),
                    ty: t.clone(),
                })
                .collect(),
        };
        artifacts.write(
            &sidecar_name(&artifact),
            &serde_json::to_vec_pretty(&sidecar).expect("plain data"),
        )?;
        Ok(QueryResult {
            columns,
            column_types,
            preview,
            total_rows,
            artifact,
        })
    }

    /// Runs a read-only query and returns raw values, without an artifact.
    pub fn fetch(&self, sql: &str) -> Result<Vec<Vec<Value>>, QueryError> {
        let conn = self.pool.lease();
        let mut stmt = conn.prepare(sql).map_err(QueryError::from_prepare)?;
        if !stmt.readonly() {
            return Err(QueryError::NotReadOnly);
        }
        let n = stmt.column_count();
        let rows = stmt
            .query_map([], |r| {
                (0..n)
                    .map(|i| r.get::<_, Value>(i))
                    .collect::<rusqlite::Result<Vec<_>>>()
            })
            .map_err(QueryError::from_step)?
            .collect::<Result<Vec<_>, _>>()
            .map_err(QueryError::from_step)?;
        Ok(rows)
    }

    pub fn vector_search(
        &self,
        table: &str,
        column: &str,
        query: &[f64],
        top_k: usize,
    ) -> Result<Vec<(RowKey, f64)>, LakeError> {
        Ok(self.vectors.search(table, column, query, top_k)?)
    }

    pub fn name_search(&self, column: &str, value: &str) -> Result<Vec<NameMatch>, LakeError> {
        let column = NameColumn::parse(column)?;
        Ok(self.names.search(column, value))
    }
}

/// Renders name matches as the transcript-style table: every metadata
/// column, alphabetical.
pub fn name_matches_markdown(matches: &[NameMatch]) -> String {
    let columns: Vec<String> = matches
        .first()
        .map(|m| m.metadata.keys().cloned().collect())
        .unwrap_or_default();
    let rows: Vec<Vec<String>> = matches
        .iter()
        .map(|m| {
            columns
                .iter()
                .map(|c| m.metadata.get(c).cloned().unwrap_or_default())
                .collect()
        })
        .collect();
    markdown_table(&columns, &rows, rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_lake_lists_nothing() {
        let lake = DataLake::empty().unwrap();
        assert!(lake.list_tables().is_empty());
        assert!(
            matches!(lake.schema("papers"), Err(LakeError::UnknownTables(t)) if t == ["papers"])
        );
    }

    #[test]
    fn floats_render_like_a_dataframe() {
        assert_eq!(render_float(3.0), "3.0");
        assert_eq!(render_float(0.484848), "0.484848");
        assert_eq!(render_float(1e20), "1e20");
        assert_eq!(render_float(-2.5e-7), "-2.5e-7");
        assert_eq!(render_value(&Value::Null), "");
    }

    #[test]
    fn sidecar_names_follow_the_artifact() {
        assert_eq!(sidecar_name("abc.csv"), "abc.schema.json");
    }
}

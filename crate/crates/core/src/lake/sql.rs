//! Engine extensions: the `TEXT_EMBEDDING` scalar function and the
//! `VECTOR_SEARCH` table-valued function.

use std::borrow::Cow;
use std::collections::HashMap;
use std::ffi::c_int;
use std::fmt;
use std::marker::PhantomData;
use std::sync::Arc;

use rusqlite::functions::FunctionFlags;
use rusqlite::types::{ToSqlOutput, Value, ValueRef};
use rusqlite::vtab::{
    Context, Filters, IndexConstraintOp, IndexInfo, Module, VTab, VTabConnection, VTabCursor,
};
use rusqlite::{Connection, ToSql};

use super::embedding::{cosine_distance, from_blob, text_embedding, to_blob, EMBEDDING_DIM};

/// A primary-key value. Integers order before text.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RowKey {
    Int(i64),
    Text(String),
}

impl fmt::Display for RowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowKey::Int(i) => write!(f, "{i}"),
            RowKey::Text(s) => f.write_str(s),
        }
    }
}

impl ToSql for RowKey {
    fn to_sql(&self) -> rusqlite::Result<ToSqlOutput<'_>> {
        Ok(match self {
            RowKey::Int(i) => ToSqlOutput::Owned(Value::Integer(*i)),
            RowKey::Text(s) => ToSqlOutput::Borrowed(ValueRef::Text(s.as_bytes())),
        })
    }
}

/// Vectors of one column, sorted by primary key.
type ColumnVectors = Vec<(RowKey, Vec<f64>)>;

/// Stored vectors per `(table, column)`.
#[derive(Debug, Default)]
pub struct VectorIndex {
    columns: HashMap<(String, String), ColumnVectors>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VectorSearchError {
    #[error("VECTOR_SEARCH: unknown embedding column {table}.{column}")]
    UnknownColumn { table: String, column: String },
    #[error("VECTOR_SEARCH: query must be a {EMBEDDING_DIM}-dimensional vector")]
    BadQuery,
    #[error("VECTOR_SEARCH: top_k must be a positive integer")]
    BadTopK,
}

impl VectorIndex {
    pub fn insert(&mut self, table: &str, column: &str, mut rows: Vec<(RowKey, Vec<f64>)>) {
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        self.columns
            .insert((table.to_string(), column.to_string()), rows);
    }

    /// The `top_k` nearest rows by cosine distance; ties by ascending key.
    pub fn search(
        &self,
        table: &str,
        column: &str,
        query: &[f64],
        top_k: usize,
    ) -> Result<Vec<(RowKey, f64)>, VectorSearchError> {
        let rows = self
            .columns
            .get(&(table.to_string(), column.to_string()))
            .ok_or_else(|| VectorSearchError::UnknownColumn {
                table: table.into(),
                column: column.into(),
            })?;
        if query.len() != EMBEDDING_DIM {
            return Err(VectorSearchError::BadQuery);
        }
        if top_k == 0 {
            return Err(VectorSearchError::BadTopK);
        }
        let mut scored: Vec<(RowKey, f64)> = rows
            .iter()
            .map(|(k, v)| (k.clone(), cosine_distance(query, v)))
            .collect();
        scored.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(top_k);
        Ok(scored)
    }
}

/// Registers both extensions on `conn`.
pub(crate) fn register(conn: &Connection, index: Arc<VectorIndex>) -> rusqlite::Result<()> {
    conn.create_scalar_function(
        "TEXT_EMBEDDING",
        1,
        FunctionFlags::SQLITE_UTF8 | FunctionFlags::SQLITE_DETERMINISTIC,
        |ctx| {
            Ok(match ctx.get_raw(0) {
                ValueRef::Null => None,
                ValueRef::Text(t) => Some(to_blob(&text_embedding(&String::from_utf8_lossy(t)))),
                other => {
                    let s = match other {
                        ValueRef::Integer(i) => i.to_string(),
                        ValueRef::Real(r) => r.to_string(),
                        _ => {
                            return Err(rusqlite::Error::UserFunctionError(
                                "TEXT_EMBEDDING expects text".into(),
                            ))
                        }
                    };
                    Some(to_blob(&text_embedding(&s)))
                }
            })
        },
    )?;
    conn.create_module(c"VECTOR_SEARCH", &VECTOR_SEARCH_MODULE, Some(index))
}

const VECTOR_SEARCH_MODULE: Module<VectorSearchTab> = Module::eponymous_only_module();

const COL_TABLE: c_int = 2;
const COL_TOP_K: c_int = 5;
const ARGS: usize = 4;

#[repr(C)]
struct VectorSearchTab {
    base: rusqlite::vtab::sqlite3_vtab,
    index: Arc<VectorIndex>,
}

unsafe impl<'vtab> VTab<'vtab> for VectorSearchTab {
    type Aux = Arc<VectorIndex>;
    type Cursor = VectorSearchCursor<'vtab>;

    fn connect(
        _db: &mut VTabConnection,
        aux: Option<&Arc<VectorIndex>>,
        _module_name: &[u8],
        _database_name: &[u8],
        _table_name: &[u8],
        _args: &[&[u8]],
    ) -> rusqlite::Result<(Cow<'static, std::ffi::CStr>, Self)> {
        let index = aux.cloned().unwrap_or_default();
        Ok((
            Cow::Borrowed(c"CREATE TABLE x(base_id, distance, table_name HIDDEN, column_name HIDDEN, query_vector HIDDEN, top_k HIDDEN)"),
            Self {
                base: Default::default(),
                index,
            },
        ))
    }

    fn best_index(&self, info: &mut IndexInfo) -> rusqlite::Result<bool> {
        let mut slots: [Option<usize>; ARGS] = [None; ARGS];
        for (i, c) in info.constraints().enumerate() {
            let col = c.column();
            if (COL_TABLE..=COL_TOP_K).contains(&col)
                && c.is_usable()
                && c.operator() == IndexConstraintOp::SQLITE_INDEX_CONSTRAINT_EQ
            {
                slots[(col - COL_TABLE) as usize] = Some(i);
            }
        }
        let mut mask = 0;
        let mut argv = 0;
        for (slot, constraint) in slots.iter().enumerate() {
            if let Some(i) = constraint {
                argv += 1;
                mask |= 1 << slot;
                let mut usage = info.constraint_usage(*i);
                usage.set_argv_index(argv);
                usage.set_omit(true);
            }
        }
        info.set_idx_num(mask);
        if mask == (1 << ARGS) - 1 {
            info.set_estimated_cost(1.0);
            info.set_estimated_rows(100);
        } else {
            info.set_estimated_cost(1e12);
        }
        Ok(true)
    }

    fn open(&mut self) -> rusqlite::Result<VectorSearchCursor<'_>> {
        Ok(VectorSearchCursor {
            base: Default::default(),
            index: Arc::clone(&self.index),
            rows: Vec::new(),
            pos: 0,
            phantom: PhantomData,
        })
    }
}

#[repr(C)]
struct VectorSearchCursor<'vtab> {
    base: rusqlite::vtab::sqlite3_vtab_cursor,
    index: Arc<VectorIndex>,
    rows: Vec<(RowKey, f64)>,
    pos: usize,
    phantom: PhantomData<&'vtab VectorSearchTab>,
}

fn module_err(e: impl fmt::Display) -> rusqlite::Error {
    rusqlite::Error::ModuleError(e.to_string())
}

fn query_vector(v: Value) -> rusqlite::Result<Vec<f64>> {
    match v {
        Value::Blob(b) => from_blob(&b).ok_or_else(|| module_err(VectorSearchError::BadQuery)),
        Value::Text(t) => serde_json::from_str::<Vec<f64>>(&t)
            .map_err(|_| module_err(VectorSearchError::BadQuery)),
        _ => Err(module_err(VectorSearchError::BadQuery)),
    }
}

unsafe impl VTabCursor for VectorSearchCursor<'_> {
    fn filter(
        &mut self,
        idx_num: c_int,
        _idx_str: Option<&str>,
        args: &Filters<'_>,
    ) -> rusqlite::Result<()> {
        if idx_num != (1 << ARGS) - 1 {
            return Err(module_err(
                "VECTOR_SEARCH requires four arguments: (table, column, query_vector, top_k)",
            ));
        }
        let table: String = args.get(0)?;
        let column: String = args.get(1)?;
        let query = query_vector(args.get::<Value>(2)?)?;
        let top_k = match args.get::<Value>(3)? {
            Value::Integer(k) if k > 0 => k as usize,
            _ => return Err(module_err(VectorSearchError::BadTopK)),
        };
        self.rows = self
            .index
            .search(&table, &column, &query, top_k)
            .map_err(module_err)?;
        self.pos = 0;
        Ok(())
    }

    fn next(&mut self) -> rusqlite::Result<()> {
        self.pos += 1;
        Ok(())
    }

    fn eof(&self) -> bool {
        self.pos >= self.rows.len()
    }

    fn column(&self, ctx: &mut Context, i: c_int) -> rusqlite::Result<()> {
        let (key, distance) = &self.rows[self.pos];
        match i {
            0 => ctx.set_result(key),
            1 => ctx.set_result(distance),
            _ => ctx.set_result(&Option::<i64>::None),
        }
    }

    fn rowid(&self) -> rusqlite::Result<i64> {
        Ok(self.pos as i64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conn_with(index: VectorIndex) -> Connection {
        let conn = Connection::open_in_memory().unwrap();
        register(&conn, Arc::new(index)).unwrap();
        conn
    }

    fn sample_index() -> VectorIndex {
        let mut idx = VectorIndex::default();
        let rows = [
            "graph theory",
            "citation networks",
            "team science",
            "disruption of science",
        ]
        .iter()
        .enumerate()
        .map(|(i, t)| (RowKey::Int(i as i64 + 1), text_embedding(t)))
        .collect();
        idx.insert("papers", "abstract_embedding", rows);
        idx
    }

    #[test]
    fn text_embedding_returns_a_768_vector_blob() {
        let conn = conn_with(VectorIndex::default());
        let blob: Vec<u8> = conn
            .query_row("SELECT TEXT_EMBEDDING('x')", [], |r| r.get(0))
            .unwrap();
        assert_eq!(from_blob(&blob).unwrap(), text_embedding("x"));
        let null: Option<Vec<u8>> = conn
            .query_row("SELECT TEXT_EMBEDDING(NULL)", [], |r| r.get(0))
            .unwrap();
        assert!(null.is_none());
    }

    #[test]
    fn vector_search_ranks_by_distance() {
        let conn = conn_with(sample_index());
        let mut stmt = conn
            .prepare("SELECT base_id, distance FROM VECTOR_SEARCH('papers', 'abstract_embedding', TEXT_EMBEDDING('citation networks'), 2)")
            .unwrap();
        let rows: Vec<(i64, f64)> = stmt
            .query_map([], |r| Ok((r.get(0)?, r.get(1)?)))
            .unwrap()
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0], (2, 0.0));
        assert!(rows[1].1 >= rows[0].1);
    }

    #[test]
    fn top_k_beyond_size_returns_everything() {
        let conn = conn_with(sample_index());
        let n: i64 = conn
            .query_row("SELECT COUNT(*) FROM VECTOR_SEARCH('papers', 'abstract_embedding', TEXT_EMBEDDING('q'), 100)", [], |r| r.get(0))
            .unwrap();
        assert_eq!(n, 4);
    }

    #[test]
    fn errors_are_reported() {
        let conn = conn_with(sample_index());
        let err = conn
            .query_row("SELECT COUNT(*) FROM VECTOR_SEARCH('nope', 'abstract_embedding', TEXT_EMBEDDING('q'), 3)", [], |r| r.get::<_, i64>(0))
            .unwrap_err();
        assert!(
            err.to_string()
                .contains("unknown embedding column nope.abstract_embedding"),
            "{err}"
        );
        let err = conn
            .query_row("SELECT COUNT(*) FROM VECTOR_SEARCH('papers', 'abstract_embedding', TEXT_EMBEDDING('q'), 0)", [], |r| r.get::<_, i64>(0))
            .unwrap_err();
        assert!(err.to_string().contains("top_k"), "{err}");
    }

    #[test]
    fn ties_break_by_ascending_key() {
        let mut idx = VectorIndex::default();
        let v = text_embedding("same");
        idx.insert(
            "patents",
            "abstract_embedding",
            vec![
                (RowKey::Text("b".into()), v.clone()),
                (RowKey::Text("a".into()), v.clone()),
            ],
        );
        let hits = idx.search("patents", "abstract_embedding", &v, 2).unwrap();
        assert_eq!(hits[0].0, RowKey::Text("a".into()));
        assert_eq!(hits[1].0, RowKey::Text("b".into()));
    }
}

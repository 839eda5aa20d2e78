//! Fixture loading: one `<table>.csv` per table, header row first.

use std::collections::HashSet;
use std::path::Path;

use rusqlite::types::Value;
use rusqlite::Connection;

use super::catalog::{ColumnType, TableSpec};
use super::embedding::{text_embedding, to_blob, EMBEDDING_DIM};
use super::LakeError;

pub(crate) fn quote_ident(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

pub(crate) fn create_table(conn: &Connection, spec: &TableSpec) -> rusqlite::Result<()> {
    let cols: Vec<String> = spec
        .columns
        .iter()
        .map(|c| {
            let mut d = format!("{} {}", quote_ident(c.name), c.ty.sqlite());
            if spec.primary_key == Some(c.name) {
                d.push_str(" PRIMARY KEY");
            }
            if c.not_null {
                d.push_str(" NOT NULL");
            }
            d
        })
        .collect();
    conn.execute_batch(&format!(
        "CREATE TABLE {} ({});",
        quote_ident(spec.name),
        cols.join(", ")
    ))
}

fn parse_cell(spec: &TableSpec, col: usize, raw: &str, line: u64) -> Result<Value, LakeError> {
    let c = &spec.columns[col];
    let bad = |message: String| LakeError::BadValue {
        table: spec.name.into(),
        line,
        column: c.name.into(),
        message,
    };
    if raw.is_empty() {
        if c.not_null {
            return Err(bad("empty value in a NOT NULL column".into()));
        }
        return Ok(Value::Null);
    }
    Ok(match c.ty {
        ColumnType::Int64 => Value::Integer(
            raw.trim()
                .parse()
                .map_err(|_| bad(format!("{raw:?} is not an integer")))?,
        ),
        ColumnType::Float64 => Value::Real(
            raw.trim()
                .parse()
                .map_err(|_| bad(format!("{raw:?} is not a number")))?,
        ),
        ColumnType::String => Value::Text(raw.to_string()),
        ColumnType::Bool => Value::Integer(match raw.trim().to_ascii_lowercase().as_str() {
            "true" | "1" => 1,
            "false" | "0" => 0,
            _ => return Err(bad(format!("{raw:?} is not a boolean"))),
        }),
        ColumnType::Float64Array => {
            let v: Vec<f64> = serde_json::from_str(raw)
                .map_err(|e| bad(format!("not a JSON array of numbers: {e}")))?;
            if v.len() != EMBEDDING_DIM {
                return Err(bad(format!(
                    "expected {EMBEDDING_DIM} values, found {}",
                    v.len()
                )));
            }
            Value::Blob(to_blob(&v))
        }
    })
}

/// Loads one table's CSV into `conn`. Empty embedding cells are filled with
/// the embedding of the row's `abstract`.
pub(crate) fn load_table(
    conn: &Connection,
    dir: &Path,
    spec: &TableSpec,
) -> Result<usize, LakeError> {
    let path = dir.join(format!("{}.csv", spec.name));
    if !path.is_file() {
        return Err(LakeError::MissingTable {
            table: spec.name.into(),
        });
    }
    let mut reader = csv::Reader::from_path(&path).map_err(|e| LakeError::Csv {
        table: spec.name.into(),
        message: e.to_string(),
    })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| LakeError::Csv {
            table: spec.name.into(),
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let expected: Vec<&str> = spec.columns.iter().map(|c| c.name).collect();
    let found: HashSet<&str> = header.iter().map(String::as_str).collect();
    if header.len() != expected.len() || expected.iter().any(|c| !found.contains(c)) {
        return Err(LakeError::ColumnMismatch {
            table: spec.name.into(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: header,
        });
    }
    // position of each spec column in the file
    let positions: Vec<usize> = expected
        .iter()
        .map(|c| header.iter().position(|h| h == c).expect("checked above"))
        .collect();
    let abstract_col = spec
        .columns
        .iter()
        .position(|c| c.name == "abstract")
        .map(|i| positions[i]);

    let placeholders = vec!["?"; expected.len()].join(", ");
    let sql = format!(
        "INSERT INTO {} ({}) VALUES ({placeholders})",
        quote_ident(spec.name),
        expected
            .iter()
            .map(|c| quote_ident(c))
            .collect::<Vec<_>>()
            .join(", ")
    );
    let tx = conn.unchecked_transaction()?;
    let mut rows = 0;
    {
        let mut stmt = tx.prepare(&sql)?;
        for record in reader.records() {
            let record = record.map_err(|e| LakeError::Csv {
                table: spec.name.into(),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let mut values = Vec::with_capacity(expected.len());
            for (i, &pos) in positions.iter().enumerate() {
                let raw = record.get(pos).unwrap_or("");
                let v = if spec.columns[i].ty == ColumnType::Float64Array && raw.is_empty() {
                    match abstract_col
                        .and_then(|a| record.get(a))
                        .filter(|a| !a.is_empty())
                    {
                        Some(text) => Value::Blob(to_blob(&text_embedding(text))),
                        None => Value::Null,
                    }
                } else {
                    parse_cell(spec, i, raw, line)?
                };
                values.push(v);
            }
            stmt.execute(rusqlite::params_from_iter(values.iter()))
                .map_err(|e| match e {
                    rusqlite::Error::SqliteFailure(f, _)
                        if f.code == rusqlite::ErrorCode::ConstraintViolation =>
                    {
                        LakeError::DuplicateKey {
                            table: spec.name.into(),
                            line,
                        }
                    }
                    other => LakeError::Engine(other.to_string()),
                })?;
            rows += 1;
        }
    }
    tx.commit()?;
    Ok(rows)
}

/// Checks every foreign key of `spec` against its parent table.
pub(crate) fn check_foreign_keys(conn: &Connection, spec: &TableSpec) -> Result<(), LakeError> {
    for fk in spec.foreign_keys {
        let sql = format!(
            "SELECT c.{col} FROM {child} c LEFT JOIN {parent} p ON p.{pk} = c.{col} \
             WHERE c.{col} IS NOT NULL AND p.{pk} IS NULL LIMIT 1",
            col = quote_ident(fk.column),
            child = quote_ident(spec.name),
            parent = quote_ident(fk.table),
            pk = quote_ident(fk.references),
        );
        let dangling: Option<Value> = match conn.query_row(&sql, [], |r| r.get(0)) {
            Ok(v) => Some(v),
            Err(rusqlite::Error::QueryReturnedNoRows) => None,
            Err(e) => return Err(e.into()),
        };
        if let Some(v) = dangling {
            return Err(LakeError::DanglingForeignKey {
                table: spec.name.into(),
                column: fk.column.into(),
                value: super::render_value(&v),
                references: format!("{}.{}", fk.table, fk.references),
            });
        }
    }
    Ok(())
}

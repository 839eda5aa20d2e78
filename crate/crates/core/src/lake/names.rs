//! Name disambiguation over field and institution names.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::embedding::{cosine_distance, text_embedding};

pub const NAME_SEARCH_LIMIT: usize = 10;

/// The columns `name_search` accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NameColumn {
    FieldName,
    InstitutionName,
}

impl NameColumn {
    pub const OPTIONS: [&'static str; 2] = ["field_name", "institution_name"];

    pub fn parse(s: &str) -> Result<Self, InvalidNameColumn> {
        match s {
            "field_name" => Ok(NameColumn::FieldName),
            "institution_name" => Ok(NameColumn::InstitutionName),
            other => Err(InvalidNameColumn(other.to_string())),
        }
    }

    pub fn as_str(self) -> &'static str {
        Self::OPTIONS[self as usize]
    }

    /// Source table and its id column.
    pub(crate) fn source(self) -> (&'static str, &'static str) {
        match self {
            NameColumn::FieldName => ("fields", "field_id"),
            NameColumn::InstitutionName => ("institutions", "institution_id"),
        }
    }
}

impl fmt::Display for NameColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid column `{0}`: valid options only include field_name and institution_name")]
pub struct InvalidNameColumn(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NameMatch {
    pub entity_id: i64,
    pub name: String,
    pub distance: f64,
    /// Every column of the matched row, rendered as text.
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub(crate) struct NameCandidate {
    pub id: i64,
    pub name: String,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Default)]
pub struct NameIndex {
    entries: BTreeMap<NameColumnKey, Vec<(NameCandidate, Vec<f64>)>>,
}

type NameColumnKey = u8;

impl NameIndex {
    pub(crate) fn insert(&mut self, column: NameColumn, candidates: Vec<NameCandidate>) {
        let rows = candidates
            .into_iter()
            .map(|c| {
                let v = text_embedding(&c.name);
                (c, v)
            })
            .collect();
        self.entries.insert(column as u8, rows);
    }

    pub fn len(&self, column: NameColumn) -> usize {
        self.entries.get(&(column as u8)).map_or(0, Vec::len)
    }

    /// Best matches first: exact case-insensitive matches, then by
    /// embedding distance, then by id.
    pub fn search(&self, column: NameColumn, value: &str) -> Vec<NameMatch> {
        let Some(rows) = self.entries.get(&(column as u8)) else {
            return Vec::new();
        };
        let q = text_embedding(value);
        let wanted = value.trim().to_lowercase();
        let mut scored: Vec<(bool, f64, &NameCandidate)> = rows
            .iter()
            .map(|(c, v)| {
                (
                    c.name.trim().to_lowercase() != wanted,
                    cosine_distance(&q, v),
                    c,
                )
            })
            .collect();
        scored.sort_by(|a, b| {
            a.0.cmp(&b.0)
                .then(a.1.total_cmp(&b.1))
                .then(a.2.id.cmp(&b.2.id))
        });
        scored
            .into_iter()
            .take(NAME_SEARCH_LIMIT)
            .map(|(_, d, c)| NameMatch {
                entity_id: c.id,
                name: c.name.clone(),
                distance: d,
                metadata: c.metadata.clone(),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(id: i64, name: &str) -> NameCandidate {
        NameCandidate {
            id,
            name: name.into(),
            metadata: BTreeMap::new(),
        }
    }

    #[test]
    fn exact_match_ranks_first_and_results_are_capped() {
        let mut idx = NameIndex::default();
        let mut c: Vec<_> = (0..20)
            .map(|i| cand(i, &format!("Harvard University Campus {i}")))
            .collect();
        c.push(cand(99, "HARVARD UNIVERSITY"));
        idx.insert(NameColumn::InstitutionName, c);
        let hits = idx.search(NameColumn::InstitutionName, "harvard university");
        assert_eq!(hits.len(), NAME_SEARCH_LIMIT);
        assert_eq!(hits[0].entity_id, 99);
        assert!(hits
            .windows(2)
            .skip(1)
            .all(|w| w[0].distance <= w[1].distance));
    }

    #[test]
    fn invalid_column_names_both_options() {
        let err = NameColumn::parse("authors").unwrap_err();
        assert!(err.to_string().contains("field_name and institution_name"));
        assert_eq!(
            NameColumn::parse("field_name").unwrap().as_str(),
            "field_name"
        );
    }
}

//! Markdown rendering for tabular output.

/// A table preview plus the size of the full result it was cut from.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRender<'a> {
    pub columns: &'a [String],
    pub rows: &'a [Vec<String>],
    pub total_rows: usize,
}

impl TableRender<'_> {
    pub fn to_markdown(&self) -> String {
        markdown_table(self.columns, self.rows, self.total_rows)
    }
}

fn cell(s: &str) -> String {
    s.replace('|', "\\|").replace(['\r', '\n'], " ")
}

/// Pipe-delimited table with a `[N rows x M columns]` footer describing
/// the full result.
pub fn markdown_table(columns: &[String], rows: &[Vec<String>], total_rows: usize) -> String {
    let mut out = String::new();
    out.push_str("| ");
    out.push_str(
        &columns
            .iter()
            .map(|c| cell(c))
            .collect::<Vec<_>>()
            .join(" | "),
    );
    out.push_str(" |\n| ");
    out.push_str(
        &columns
            .iter()
            .map(|_| ":-----:")
            .collect::<Vec<_>>()
            .join(" | "),
    );
    out.push_str(" |\n");
    for row in rows {
        out.push_str("| ");
        out.push_str(&row.iter().map(|c| cell(c)).collect::<Vec<_>>().join(" | "));
        out.push_str(" |\n");
    }
    if total_rows > rows.len() {
        out.push_str("| ");
        out.push_str(
            &columns
                .iter()
                .map(|_| "...")
                .collect::<Vec<_>>()
                .join(" | "),
        );
        out.push_str(" |\n");
    }
    out.push_str(&format!(
        "\n[{} rows x {} columns]",
        total_rows,
        columns.len()
    ));
    out
}

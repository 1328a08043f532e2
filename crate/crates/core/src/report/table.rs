//! CSV / markdown table rendering.
//!
//! Rates are fractions internally and render as percentages with one decimal place.
//! Paired cells render as `"6.3 (-12.9)"`.

use serde::{Deserialize, Serialize};

use super::ReportError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    #[default]
    Csv,
    Markdown,
}

impl TableFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Markdown => "md",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(u64),
    /// A fraction rendered as a percentage; `None` renders as `n/a`.
    Rate(Option<f64>),
    /// Two fractions rendered as `"a (b)"` percentages, e.g. a rate and its bias.
    Paired(f64, f64),
    /// A plain number with the given decimals; `None` renders as `n/a`.
    Number(Option<f64>, usize),
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Cell {
        Cell::Text(s.into())
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

fn fixed(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    // "-0.0" reads as a real sign; drop it.
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

pub fn percent(v: f64) -> String {
    fixed(v * 100.0, 1)
}

pub fn render_cell(cell: &Cell) -> String {
    match cell {
        Cell::Text(s) => s.clone(),
        Cell::Int(n) => n.to_string(),
        Cell::Rate(Some(v)) => percent(*v),
        Cell::Rate(None) | Cell::Number(None, _) => "n/a".to_string(),
        Cell::Paired(a, b) => format!("{} ({})", percent(*a), percent(*b)),
        Cell::Number(Some(v), d) => fixed(*v, *d),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn md_field(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

/// Renders a rectangular table. Every row must have as many cells as the header.
pub fn render_table(header: &[String], rows: &[Vec<Cell>], format: TableFormat) -> Result<String, ReportError> {
    if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != header.len()) {
        return Err(ReportError::RaggedRows {
            row,
            expected: header.len(),
            found: r.len(),
        });
    }
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            let line = |fields: Vec<String>| fields.iter().map(|f| csv_field(f)).collect::<Vec<_>>().join(",") + "\n";
            out.push_str(&line(header.to_vec()));
            for r in rows {
                out.push_str(&line(r.iter().map(render_cell).collect()));
            }
        }
        TableFormat::Markdown => {
            let line = |fields: Vec<String>| format!("| {} |\n", fields.iter().map(|f| md_field(f)).collect::<Vec<_>>().join(" | "));
            out.push_str(&line(header.to_vec()));
            out.push_str(&format!("|{}\n", "---|".repeat(header.len())));
            for r in rows {
                out.push_str(&line(r.iter().map(render_cell).collect()));
            }
        }
    }
    Ok(out)
}

/// A header plus rows, ready to render.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(row);
    }

    pub fn render(&self, format: TableFormat) -> Result<String, ReportError> {
        render_table(&self.header, &self.rows, format)
    }
}

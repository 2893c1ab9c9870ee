//! CSV and JSON artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// From an output path's extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(Self::Csv),
            "json" => Some(Self::Json),
            _ => None,
        }
    }
}

/// Full-precision CSV number: 17 significant digits round-trip every f64.
pub fn number(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => number(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Text(b.to_string())
    }
}

/// A CSV table with optional `#`-prefixed preamble lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub preamble: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), ..Self::default() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for line in &self.preamble {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(out, "{}", self.header.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

/// Rendered command output, not yet written anywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub format: Format,
    pub content: String,
}

impl Artifact {
    pub fn csv(table: &Table) -> Self {
        Self { format: Format::Csv, content: table.render() }
    }

    pub fn json<T: Serialize>(value: &T) -> Result<Self, CliError> {
        let mut content =
            serde_json::to_string_pretty(value).map_err(|e| CliError::io(format!("cannot serialize output: {e}")))?;
        content.push('\n');
        Ok(Self { format: Format::Json, content })
    }

    /// Writes to `path`, or stdout when `None`.
    pub fn write(&self, path: Option<&PathBuf>) -> Result<(), CliError> {
        match path {
            Some(p) => {
                std::fs::write(p, &self.content).map_err(|e| CliError::io(format!("cannot write {}: {e}", p.display())))
            }
            None => {
                print!("{}", self.content);
                Ok(())
            }
        }
    }
}

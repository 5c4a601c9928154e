//! `AIFCSV v1` comma-separated series: the magic line, a column header, then rows.

use std::fmt::Display;
use std::path::Path;

use crate::error::{AifError, Result};

pub const CSV_MAGIC: &str = "AIFCSV v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Series {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<T: Display>(&mut self, row: impl IntoIterator<Item = T>) {
        let row: Vec<String> = row.into_iter().map(|v| v.to_string()).collect();
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| AifError::format("AIFCSV", format!("no column {name:?}")))?;
        self.rows
            .iter()
            .map(|r| {
                r[idx]
                    .parse()
                    .map_err(|_| AifError::format("AIFCSV", format!("bad number {:?} in {name}", r[idx])))
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(32 * (self.rows.len() + 2));
        out.push_str(CSV_MAGIC);
        out.push('\n');
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(CSV_MAGIC) => {}
            other => {
                return Err(AifError::format(
                    "AIFCSV",
                    format!("expected header {CSV_MAGIC:?}, found {:?}", other.unwrap_or("")),
                ))
            }
        }
        let columns: Vec<String> = lines
            .next()
            .ok_or_else(|| AifError::format("AIFCSV", "missing column header"))?
            .split(',')
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row: Vec<String> = line.split(',').map(str::to_string).collect();
            if row.len() != columns.len() {
                return Err(AifError::format(
                    "AIFCSV",
                    format!("row {} has {} fields, expected {}", i + 1, row.len(), columns.len()),
                ));
            }
            rows.push(row);
        }
        Ok(Self { columns, rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| AifError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(AifError::MissingArtifact(path.to_path_buf()));
        }
        Self::parse(&std::fs::read_to_string(path).map_err(|e| AifError::io(path, e))?)
    }
}

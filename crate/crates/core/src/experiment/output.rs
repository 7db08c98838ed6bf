//! Versioned CSV tables with `# key=value` metadata lines.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

pub const SCHEMA: &str = "anderson-lab/v1";

/// Hex SHA-256 prefix (128 bits) of `text`.
pub fn fingerprint(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().take(16).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Shortest round-trip decimal, switching to exponent form for very small
/// or very large magnitudes.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvTable {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        Self { meta: Vec::new(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.meta.push((key.to_string(), value.into()));
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = format!("# schema={SCHEMA}\n");
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(l) if l.trim() == format!("# schema={SCHEMA}") => {}
            Some(l) => return Err(LabError::Schema(format!("unsupported schema line `{l}`"))),
            None => return Err(LabError::Schema("empty file".into())),
        }
        let mut table = CsvTable::default();
        let mut header = None;
        for line in lines.by_ref() {
            if let Some(m) = line.strip_prefix("# ") {
                let (k, v) = m.split_once('=').ok_or_else(|| LabError::Schema(format!("bad metadata `{line}`")))?;
                table.meta.push((k.to_string(), v.to_string()));
            } else {
                header = Some(line);
                break;
            }
        }
        let header = header.ok_or_else(|| LabError::Schema("missing column header".into()))?;
        table.columns = header.split(',').map(|c| c.trim().to_string()).collect();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
            if row.len() != table.columns.len() {
                return Err(LabError::Schema(format!("row {} has {} fields, expected {}", i + 1, row.len(), table.columns.len())));
            }
            table.rows.push(row);
        }
        Ok(table)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::Schema(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| LabError::Schema(format!("missing column `{name}`")))
    }

    /// Column `name` of row `i` as a number; `None` for an empty field.
    pub fn number(&self, i: usize, name: &str) -> Result<Option<f64>> {
        let c = self.column(name)?;
        let field = &self.rows[i][c];
        if field.is_empty() {
            return Ok(None);
        }
        field
            .parse::<f64>()
            .map(Some)
            .map_err(|e| LabError::Schema(format!("row {}, column `{name}`: {e}", i + 1)))
    }
}

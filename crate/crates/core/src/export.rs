//! CSV tables with a `#`-prefixed provenance header.
//!
//! Numbers are written with 17 significant digits so every finite `f64`
//! parses back to the identical value. Missing values are written as `nan`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Marks a file whose producer stopped early.
pub const FAILURE_MARKER: &str = "# FAILED:";
/// Marks a table that is valid but has no rows.
pub const EMPTY_MARKER: &str = "# EMPTY";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExportTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Provenance `key: value` pairs.
    pub header: Vec<(String, String)>,
    pub failure: Option<String>,
}

pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

fn parse_number(s: &str) -> Result<f64> {
    match s {
        "nan" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s
            .parse()
            .map_err(|_| Error::Parse(format!("'{s}' is not a number"))),
    }
}

impl ExportTable {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            ..Default::default()
        }
    }

    pub fn with_header(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        self.header.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Dimension {
                expected: self.columns.len(),
                found: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.header {
            let _ = writeln!(s, "# {k}: {v}");
        }
        let _ = writeln!(s, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format_number(*v)).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        if self.rows.is_empty() && self.failure.is_none() {
            let _ = writeln!(s, "{EMPTY_MARKER}");
        }
        if let Some(msg) = &self.failure {
            let _ = writeln!(s, "{FAILURE_MARKER} {}", msg.replace('\n', " "));
        }
        s
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn write_file(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn parse<R: BufRead>(r: R) -> Result<Self> {
        let mut table = ExportTable::default();
        let mut have_columns = false;
        for line in r.lines() {
            let line = line?;
            if let Some(msg) = line.strip_prefix(FAILURE_MARKER) {
                table.failure = Some(msg.trim().to_string());
                continue;
            }
            if line == EMPTY_MARKER {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# ") {
                if let Some((k, v)) = rest.split_once(": ") {
                    table.header.push((k.to_string(), v.to_string()));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            if !have_columns {
                table.columns = line.split(',').map(|s| s.trim().to_string()).collect();
                have_columns = true;
                continue;
            }
            let row: Vec<f64> = line.split(',').map(|s| parse_number(s.trim())).collect::<Result<_>>()?;
            if row.len() != table.columns.len() {
                return Err(Error::Parse(format!(
                    "row has {} cells, header has {}",
                    row.len(),
                    table.columns.len()
                )));
            }
            table.rows.push(row);
        }
        if !have_columns {
            return Err(Error::Parse("missing column header".into()));
        }
        Ok(table)
    }

    pub fn parse_str(s: &str) -> Result<Self> {
        Self::parse(s.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_with_specials() {
        let mut t = ExportTable::new(["a", "b"]).with_header("config_hash", "abc");
        t.push_row(vec![0.1, f64::NAN]).unwrap();
        t.push_row(vec![-1.0 / 3.0, 1e-300]).unwrap();
        let back = ExportTable::parse_str(&t.to_csv()).unwrap();
        assert_eq!(back.columns, t.columns);
        assert_eq!(back.header_value("config_hash"), Some("abc"));
        assert_eq!(back.rows[1], t.rows[1]);
        assert!(back.rows[0][1].is_nan());
        assert!(back.failure.is_none());
    }

    #[test]
    fn markers() {
        let t = ExportTable::new(["x"]);
        assert!(t.to_csv().contains(EMPTY_MARKER));
        let mut f = ExportTable::new(["x"]);
        f.push_row(vec![1.0]).unwrap();
        f.failure = Some("blow-up at t = 3".into());
        let back = ExportTable::parse_str(&f.to_csv()).unwrap();
        assert_eq!(back.failure.as_deref(), Some("blow-up at t = 3"));
        assert_eq!(back.rows.len(), 1);
    }

    #[test]
    fn rejects_ragged_rows() {
        let mut t = ExportTable::new(["x", "y"]);
        assert!(t.push_row(vec![1.0]).is_err());
        assert!(ExportTable::parse_str("x,y\n1,2,3\n").is_err());
    }
}

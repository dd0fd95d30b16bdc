//! CSV with `#key=value` metadata lines.
//!
//! ```text
//! #macroscopic=false
//! #sequence=seq1
//! t1_us,amplitude
//! 0.00000000000e0,1.23456789012e4
//! ```

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub meta: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// 12 significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.11e}")
}

fn clean(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            writeln!(out, "#{}={}", clean(k).replace('=', "_"), clean(v)).expect("string write");
        }
        writeln!(out, "{}", self.columns.join(",")).expect("string write");
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&v| format_value(v)).collect();
            writeln!(out, "{}", cells.join(",")).expect("string write");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut t = Table::default();
        let mut header = false;
        for (i, line) in text.lines().enumerate() {
            if let Some(rest) = line.strip_prefix('#') {
                if header {
                    return Err(Error::Table(format!("line {}: metadata after header", i + 1)));
                }
                let (k, v) = rest
                    .split_once('=')
                    .ok_or_else(|| Error::Table(format!("line {}: metadata needs key=value", i + 1)))?;
                t.meta.insert(k.to_string(), v.to_string());
            } else if !header {
                t.columns = line.split(',').map(str::to_string).collect();
                header = true;
            } else if !line.is_empty() {
                let row = line
                    .split(',')
                    .map(|c| {
                        c.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Table(format!("line {}: bad number `{c}`", i + 1)))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                if row.len() != t.columns.len() {
                    return Err(Error::Table(format!(
                        "line {}: {} cells for {} columns",
                        i + 1,
                        row.len(),
                        t.columns.len()
                    )));
                }
                t.rows.push(row);
            }
        }
        if !header {
            return Err(Error::Table("missing header row".into()));
        }
        Ok(t)
    }
}

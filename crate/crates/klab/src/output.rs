//! CSV and JSON artifacts.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use klab_core::analysis::{CheckReport, RateFit};
use serde::Serialize;
use serde_json::{json, Value};

/// Named columns of equal length, written in order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<(&'static str, Vec<f64>)>,
}

impl Table {
    pub fn push(&mut self, name: &'static str, values: Vec<f64>) {
        debug_assert!(self.columns.first().is_none_or(|c| c.1.len() == values.len()));
        self.columns.push((name, values));
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.1.len())
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|c| c.0 == name).map(|c| c.1.as_slice())
    }
}

/// Shortest round-trip decimal.
pub fn format_number(x: f64) -> String {
    ryu::Buffer::new().format(x).to_string()
}

pub fn write_table(path: &Path, table: &Table) -> io::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(table.columns.iter().map(|c| c.0))?;
    let mut buf = ryu::Buffer::new();
    let mut row = Vec::with_capacity(table.columns.len());
    for i in 0..table.rows() {
        row.clear();
        row.extend(table.columns.iter().map(|c| buf.format(c.1[i]).to_string()));
        w.write_record(&row)?;
    }
    w.flush()
}

pub fn read_table(path: &Path) -> io::Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut columns = vec![Vec::new(); header.len()];
    for rec in r.records() {
        let rec = rec?;
        for (col, field) in columns.iter_mut().zip(rec.iter()) {
            let v = field.parse::<f64>().map_err(|e| {
                io::Error::new(io::ErrorKind::InvalidData, format!("{}: `{field}`: {e}", path.display()))
            })?;
            col.push(v);
        }
    }
    Ok((header, columns))
}

/// Contents of `report.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Report {
    pub checks: Vec<CheckReport>,
    pub fits: Vec<RateFit>,
    pub measured_constants: BTreeMap<String, Value>,
    /// Omitted from the document when empty.
    pub informational: BTreeMap<String, Value>,
}

impl Report {
    /// JSON document with sorted keys.
    pub fn to_json(&self) -> String {
        let mut doc = json!({
            "checks": self.checks,
            "fits": self.fits,
            "measured_constants": self.measured_constants,
        });
        if !self.informational.is_empty() {
            doc["informational"] = json!(self.informational);
        }
        let mut s = serde_json::to_string_pretty(&doc).expect("report values serialise");
        s.push('\n');
        s
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn write_report(path: &Path, report: &Report) -> io::Result<()> {
    std::fs::write(path, report.to_json())
}

use std::fmt::Write as _;

use anyhow::Result;
use clap::ValueEnum;
use serde_json::{Map, Value};

pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Pretty,
}

/// What a command produced: a JSON body, a flat table for CSV and
/// pretty output, and whether every assertion held.
pub struct Report {
    pub command: &'static str,
    pub body: Map<String, Value>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub failures: Vec<String>,
}

impl Report {
    pub fn new(command: &'static str, columns: Vec<&'static str>) -> Self {
        Self { command, body: Map::new(), columns, rows: Vec::new(), failures: Vec::new() }
    }

    pub fn set(&mut self, key: &str, v: impl serde::Serialize) {
        self.body.insert(key.to_string(), serde_json::to_value(v).expect("report values serialize"));
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    /// Records a failed assertion unless `ok`.
    pub fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Json => {
                let mut out = Map::new();
                out.insert("schema".into(), Value::String(format!("opspace.{}/{}", self.command, SCHEMA_VERSION)));
                out.insert("command".into(), Value::String(self.command.into()));
                out.extend(self.body.clone());
                out.insert("pass".into(), Value::Bool(self.pass()));
                out.insert("failures".into(), serde_json::to_value(&self.failures)?);
                Ok(serde_json::to_string_pretty(&Value::Object(out))? + "\n")
            }
            Format::Csv => {
                let mut s = format!("# opspace-csv v{CSV_VERSION} {}: {}\n", self.command, self.columns.join(","));
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.columns)?;
                for r in &self.rows {
                    w.write_record(r)?;
                }
                s.push_str(&String::from_utf8(w.into_inner()?)?);
                Ok(s)
            }
            Format::Pretty => Ok(self.pretty()),
        }
    }

    fn pretty(&self) -> String {
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.len()).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let mut s = String::new();
        let line = |cells: &[String], s: &mut String| {
            let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(s, "{}", parts.join("  ").trim_end());
        };
        let header: Vec<String> = self.columns.iter().map(|c| c.to_string()).collect();
        line(&header, &mut s);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        line(&rule, &mut s);
        for r in &self.rows {
            line(r, &mut s);
        }
        if self.pass() {
            s.push_str("status: pass\n");
        } else {
            for f in &self.failures {
                let _ = writeln!(s, "failed: {f}");
            }
            s.push_str("status: FAIL\n");
        }
        s
    }
}

pub fn num(x: f64) -> String {
    format!("{x:.10}")
}

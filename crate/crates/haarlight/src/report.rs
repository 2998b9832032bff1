//! Run reports: line-oriented text on stdout plus an optional CSV file.
//! Numbers are formatted once and the same string goes to both sinks, so
//! the two reports always agree exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Report of one CLI command: parameters, stage wall times, metrics, and
/// produced files.
#[derive(Debug, Default, Clone)]
pub struct RunReport {
    pub command: String,
    /// (name, value) in insertion order.
    pub fields: Vec<(String, String)>,
    /// Extra CSV rows below the key/value block (e.g. bench samples):
    /// a header row followed by data rows.
    pub table: Option<(Vec<String>, Vec<Vec<String>>)>,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        RunReport {
            command: command.to_string(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, key: &str, value: impl Into<String>) {
        self.fields.push((key.to_string(), value.into()));
    }

    pub fn push_num(&mut self, key: &str, value: f64) {
        self.push(key, fmt_num(value));
    }

    pub fn push_ms(&mut self, key: &str, seconds: f64) {
        self.push(key, fmt_num(seconds * 1e3));
    }

    /// The text form printed to stdout.
    pub fn text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command = {}", self.command);
        for (k, v) in &self.fields {
            let _ = writeln!(out, "{k} = {v}");
        }
        if let Some((header, rows)) = &self.table {
            let _ = writeln!(out, "table = {}", header.join(","));
            for row in rows {
                let _ = writeln!(out, "row = {}", row.join(","));
            }
        }
        out
    }

    /// CSV form: `key,value` pairs, then the optional table verbatim.
    pub fn csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "key,value");
        let _ = writeln!(out, "command,{}", self.command);
        for (k, v) in &self.fields {
            let _ = writeln!(out, "{},{}", k, csv_quote(v));
        }
        if let Some((header, rows)) = &self.table {
            let _ = writeln!(out);
            let _ = writeln!(out, "{}", header.join(","));
            for row in rows {
                let _ = writeln!(out, "{}", row.join(","));
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.csv()).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Shared numeric formatting for text and CSV output.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1e-3 && v.abs() < 1e7 {
        let s = format!("{v:.6}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.6e}")
    }
}

fn csv_quote(v: &str) -> String {
    if v.contains(',') || v.contains('"') {
        format!("\"{}\"", v.replace('"', "\"\""))
    } else {
        v.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_and_csv_share_numbers() {
        let mut r = RunReport::new("demo");
        r.push_num("psnr_db", 41.2345678);
        r.push_num("mse", 3.2e-9);
        let text = r.text();
        let csv = r.csv();
        for line in text.lines().skip(1) {
            let (k, v) = line.split_once(" = ").unwrap();
            assert!(csv.contains(&format!("{k},{v}")), "{k}={v} missing in csv");
        }
    }

    #[test]
    fn number_formatting() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(2.5), "2.5");
        assert_eq!(fmt_num(1234.0), "1234");
        assert!(fmt_num(3.2e-9).contains('e'));
    }
}

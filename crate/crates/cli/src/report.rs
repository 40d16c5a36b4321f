//! Verification reports: one JSON document plus sidecar CSV tables.

use std::io::Write;
use std::path::Path;

use serde_json::{json, Map, Value};

/// Anchor strings naming the result each check exercises.
pub mod anchor {
    pub const TWIST: &str = "A1";
    pub const NONDEGENERATE: &str = "A2";
    pub const SIGNATURE: &str = "eq:h";
    pub const SPACELIKE: &str = "eq:graph is spacelike";
    pub const LAGRANGIAN: &str = "eq:graph is Lagrangian";
    pub const PUSHFORWARD: &str = "eq:measure preserving";
    pub const CALIBRATED: &str = "prop:calibrated";
    pub const MEAN_CURVATURE: &str = "cor:mean curv";
    pub const COMASS: &str = "comass";
    pub const CALIBRATION: &str = "cor:cal";
    pub const MASS: &str = "th:main";
    pub const CURVATURE: &str = "rmk:curvature";
    pub const PLUMBING: &str = "invented";

    pub const ALL: &[&str] = &[
        TWIST,
        NONDEGENERATE,
        SIGNATURE,
        SPACELIKE,
        LAGRANGIAN,
        PUSHFORWARD,
        CALIBRATED,
        MEAN_CURVATURE,
        COMASS,
        CALIBRATION,
        MASS,
        CURVATURE,
        PLUMBING,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub anchor: &'static str,
    /// Residual or sup statistic the verdict rests on.
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub flagged: usize,
    pub detail: String,
}

impl Record {
    pub fn new(name: impl Into<String>, anchor: &'static str, value: f64, tolerance: f64, passed: bool) -> Self {
        Self {
            name: name.into(),
            anchor,
            value,
            tolerance,
            passed,
            flagged: 0,
            detail: String::new(),
        }
    }

    /// Passes when `value ≤ tolerance`.
    pub fn at_most(name: impl Into<String>, anchor: &'static str, value: f64, tolerance: f64) -> Self {
        Self::new(name, anchor, value, tolerance, value <= tolerance)
    }

    /// A check that could not be evaluated.
    pub fn error(name: impl Into<String>, anchor: &'static str, tolerance: f64, err: impl std::fmt::Display) -> Self {
        Self::new(name, anchor, f64::NAN, tolerance, false).detail(format!("error: {err}"))
    }

    pub fn flagged(mut self, n: usize) -> Self {
        self.flagged = n;
        self
    }

    pub fn detail(mut self, d: impl Into<String>) -> Self {
        self.detail = d.into();
        self
    }
}

/// A plot-ready CSV written next to the report.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Optional text columns appended after the numeric ones.
    pub labels: Option<(Vec<String>, Vec<Vec<String>>)>,
}

impl Table {
    pub fn new(file: impl Into<String>, header: Vec<String>) -> Self {
        Self {
            file: file.into(),
            header,
            rows: Vec::new(),
            labels: None,
        }
    }

    pub fn with_labels(mut self, header: Vec<String>) -> Self {
        self.labels = Some((header, Vec::new()));
        self
    }

    pub fn push(&mut self, row: Vec<f64>) {
        self.rows.push(row);
    }

    pub fn push_labelled(&mut self, row: Vec<f64>, labels: Vec<String>) {
        self.rows.push(row);
        if let Some((_, l)) = &mut self.labels {
            l.push(labels);
        }
    }

    pub fn write<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = self.header.clone();
        if let Some((h, _)) = &self.labels {
            header.extend(h.iter().cloned());
        }
        out.write_record(&header)?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            if let Some((_, l)) = &self.labels {
                rec.extend(l[i].iter().cloned());
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `x1..xn` or `xbar1..xbarn` column names.
pub fn coords(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub command: String,
    pub seed: u64,
    pub grid: Vec<usize>,
    pub records: Vec<Record>,
    pub tables: Vec<Table>,
}

/// JSON has no non-finite numbers; those become strings.
fn number(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

impl VerificationReport {
    pub fn new(command: impl Into<String>, seed: u64, grid: Vec<usize>) -> Self {
        Self {
            command: command.into(),
            seed,
            grid,
            records: Vec::new(),
            tables: Vec::new(),
        }
    }

    pub fn push(&mut self, r: Record) {
        self.records.push(r);
    }

    /// Conjunction of all record verdicts.
    pub fn passed(&self) -> bool {
        self.records.iter().all(|r| r.passed)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.records.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect()
    }

    /// `serde_json`'s map is ordered, so keys serialise sorted.
    pub fn to_json(&self) -> Value {
        let records: Vec<Value> = self
            .records
            .iter()
            .map(|r| {
                let mut m = Map::new();
                m.insert("anchor".into(), json!(r.anchor));
                m.insert("detail".into(), json!(r.detail));
                m.insert("flagged".into(), json!(r.flagged));
                m.insert("name".into(), json!(r.name));
                m.insert("passed".into(), json!(r.passed));
                m.insert("tolerance".into(), number(r.tolerance));
                m.insert("value".into(), number(r.value));
                Value::Object(m)
            })
            .collect();
        json!({
            "command": self.command,
            "environment": {
                "grid": self.grid,
                "seed": self.seed,
                "version": env!("CARGO_PKG_VERSION"),
            },
            "records": records,
            "tables": self.tables.iter().map(|t| t.file.clone()).collect::<Vec<_>>(),
            "verdict": if self.passed() { "pass" } else { "fail" },
        })
    }

    /// Writes `report.json` and every table into `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut text = serde_json::to_string_pretty(&self.to_json()).map_err(std::io::Error::other)?;
        text.push('\n');
        std::fs::write(dir.join("report.json"), text)?;
        for t in &self.tables {
            let f = std::fs::File::create(dir.join(&t.file))?;
            t.write(std::io::BufWriter::new(f)).map_err(std::io::Error::other)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_keys_are_sorted_and_nonfinite_values_are_strings() {
        let mut r = VerificationReport::new("curvature", 3, vec![8]);
        r.push(Record::at_most("b", anchor::CURVATURE, 0.5, 1.0));
        r.push(Record::new("a", anchor::MASS, f64::NEG_INFINITY, 0.0, false).flagged(4));
        let text = serde_json::to_string(&r.to_json()).unwrap();
        let keys = ["\"command\"", "\"environment\"", "\"records\"", "\"tables\"", "\"verdict\""];
        let pos: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{text}");
        assert!(text.contains("\"value\":\"-inf\""));
        assert!(text.contains("\"verdict\":\"fail\""));
        assert_eq!(r.failing(), vec!["a"]);
    }

    #[test]
    fn table_has_header_row() {
        let mut t = Table::new("t.csv", coords("x", 2)).with_labels(vec!["class".into()]);
        t.push_labelled(vec![0.5, -1.0], vec!["nonnegative".into()]);
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x1,x2,class\n0.5,-1,nonnegative\n");
    }
}

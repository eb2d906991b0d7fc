//! Tabular experiment output: a CSV body with one row per trial or grid
//! point and a JSON summary written next to it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::SlopeFit;

/// Version string with the `git describe` of the build, when available.
pub fn version() -> &'static str {
    env!("WMMD_VERSION")
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub experiment: String,
    pub seed: u64,
    #[serde(skip)]
    pub columns: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<Vec<f64>>,
    pub pass: bool,
    pub margins: BTreeMap<String, f64>,
    pub slopes: BTreeMap<String, SlopeFit>,
    /// Free-form scalars and settings worth keeping with the result.
    pub info: BTreeMap<String, serde_json::Value>,
}

impl Report {
    pub fn new(experiment: &str, seed: u64, columns: &[&str]) -> Self {
        Report {
            experiment: experiment.to_string(),
            seed,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            pass: true,
            margins: BTreeMap::new(),
            slopes: BTreeMap::new(),
            info: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn margin(&mut self, name: &str, value: f64) {
        self.margins.insert(name.to_string(), value);
    }

    pub fn slope(&mut self, name: &str, fit: SlopeFit) {
        self.slopes.insert(name.to_string(), fit);
    }

    pub fn note(&mut self, name: &str, value: impl Serialize) {
        self.info.insert(name.to_string(), serde_json::to_value(value).expect("serializable note"));
    }

    /// Marks the report failed when `ok` is false.
    pub fn require(&mut self, ok: bool) {
        self.pass &= ok;
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn summary_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v["version"] = serde_json::Value::String(version().to_string());
        serde_json::to_string_pretty(&v).expect("json value serializes")
    }

    /// Writes the CSV to `path` and the summary to `<path>.summary.json`.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<PathBuf> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv())?;
        let side = summary_path(path);
        std::fs::write(&side, self.summary_json() + "\n")?;
        Ok(side)
    }
}

pub fn summary_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".summary.json");
    PathBuf::from(s)
}

/// Reads a report CSV back as `(columns, rows)`.
pub fn read_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let columns: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|c| c.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{c:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((columns, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_is_header_only() {
        let r = Report::new("x", 1, &["a", "b"]);
        assert_eq!(r.to_csv(), "a,b\n");
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = Report::new("exp", 42, &["x", "y"]);
        let vals = [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0];
        for (i, &v) in vals.iter().enumerate() {
            r.push(vec![i as f64, v]);
        }
        r.margin("gap", 0.25);
        let path = dir.path().join("out.csv");
        let side = r.write(&path).unwrap();
        let (cols, rows) = read_csv(&path).unwrap();
        assert_eq!(cols, vec!["x", "y"]);
        for (row, &v) in rows.iter().zip(&vals) {
            assert_eq!(row[1].to_bits(), v.to_bits());
        }
        let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(side).unwrap()).unwrap();
        assert_eq!(summary["seed"], 42);
        assert_eq!(summary["experiment"], "exp");
        assert!(summary["version"].as_str().unwrap().starts_with(env!("CARGO_PKG_VERSION")));
        assert_eq!(summary["margins"]["gap"], 0.25);
    }
}

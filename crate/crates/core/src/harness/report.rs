//! Run reports and their on-disk form.
//!
//! A report is written as `report.json` (UTF-8, pretty-printed, keys as in
//! [`RunReport`]) plus `metrics.csv`: a header row `epoch,<column>...` and
//! one row per evaluated epoch, RFC-4180 quoting, `.` decimals, `\n` line
//! endings.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

pub const REPORT_FILE: &str = "report.json";
pub const METRICS_FILE: &str = "metrics.csv";

/// Metric columns sampled at a list of epochs. Every column has one value
/// per entry of `epochs`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSeries {
    pub epochs: Vec<usize>,
    pub columns: BTreeMap<String, Vec<f64>>,
}

impl MetricSeries {
    /// Appends one row; the first row fixes the column set.
    pub fn push(&mut self, epoch: usize, row: &[(&str, f64)]) -> Result<()> {
        if self.epochs.is_empty() && self.columns.is_empty() {
            for (name, _) in row {
                self.columns.insert((*name).to_string(), Vec::new());
            }
        }
        if row.len() != self.columns.len() || row.iter().any(|(n, _)| !self.columns.contains_key(*n)) {
            return Err(Error::invalid("metric row does not match the series columns"));
        }
        if let Some((name, v)) = row.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NumericAbort {
                epoch,
                msg: format!("metric `{name}` is {v}"),
            });
        }
        self.epochs.push(epoch);
        for (name, v) in row {
            self.columns.get_mut(*name).expect("checked above").push(*v);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self, column: &str) -> Option<f64> {
        self.columns.get(column).and_then(|c| c.last().copied())
    }

    pub fn first(&self, column: &str) -> Option<f64> {
        self.columns.get(column).and_then(|c| c.first().copied())
    }
}

/// A named comparison against a threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// `"<"`, `"<="`, `">"`, `">="` or `"=="`.
    pub relation: String,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, relation: &str, threshold: f64) -> Self {
        let passed = match relation {
            "<" => value < threshold,
            "<=" => value <= threshold,
            ">" => value > threshold,
            ">=" => value >= threshold,
            "==" => value == threshold,
            _ => false,
        };
        Self {
            name: name.into(),
            value,
            relation: relation.to_string(),
            threshold,
            passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Crate version that produced the report.
    pub library_version: String,
    pub seed: u64,
    /// The validated configuration, with defaults filled in.
    pub config: ExperimentConfig,
    /// Per-epoch metrics (loss, exact recall@k, accuracy, total edit
    /// distance, depending on the kind).
    pub series: MetricSeries,
    /// Final scalar results.
    pub summary: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    /// Seconds spent in the run; the only field that varies between
    /// identical runs.
    pub wall_clock_secs: f64,
}

impl RunReport {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config: config.clone(),
            series: MetricSeries::default(),
            summary: BTreeMap::new(),
            checks: Vec::new(),
            wall_clock_secs: 0.0,
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// JSON with the wall-clock field zeroed, for byte comparisons.
    pub fn deterministic_json(&self) -> String {
        let mut r = self.clone();
        r.wall_clock_secs = 0.0;
        serde_json::to_string_pretty(&r).expect("report serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Serialization {
            path: PathBuf::from(METRICS_FILE),
            msg: e.to_string(),
        };
        let mut header = vec!["epoch".to_string()];
        header.extend(self.series.columns.keys().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (row, epoch) in self.series.epochs.iter().enumerate() {
            let mut rec = vec![epoch.to_string()];
            rec.extend(self.series.columns.values().map(|c| c[row].to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serialization {
            path: PathBuf::from(METRICS_FILE),
            msg: e.to_string(),
        })?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// Writes `report.json` and `metrics.csv` into `dir`, creating it.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| Error::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let json = dir.join(REPORT_FILE);
        fs::write(&json, self.to_json()).map_err(io(&json))?;
        let csv = dir.join(METRICS_FILE);
        fs::write(&csv, self.to_csv()?).map_err(io(&csv))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(REPORT_FILE);
        let text = fs::read_to_string(&path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Serialization {
            path,
            msg: e.to_string(),
        })
    }
}

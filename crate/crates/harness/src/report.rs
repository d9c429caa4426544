//! Reports: JSON summary, CSV rows and optional SVG plot per experiment.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// One asserted criterion with its tolerance and sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub tolerance: String,
    pub sample_size: u64,
    /// Worst observed statistic, in the units of the tolerance.
    pub observed: f64,
    pub failures: u64,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, tolerance: impl Into<String>, sample_size: u64, observed: f64, failures: u64) -> Self {
        Self {
            name: name.into(),
            tolerance: tolerance.into(),
            sample_size,
            observed,
            failures,
            passed: failures == 0,
        }
    }

    /// Check of a single worst-case statistic against `limit`.
    pub fn at_most(name: impl Into<String>, tolerance: impl Into<String>, sample_size: u64, observed: f64, limit: f64) -> Self {
        Self::new(name, tolerance, sample_size, observed, u64::from(!(observed <= limit)))
    }
}

/// Per-replica row. Columns are fixed: replica, seed, label, log_z, tap_sup, gap_per_spin, event, value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub replica: usize,
    pub seed: u64,
    pub label: String,
    pub log_z: Option<f64>,
    pub tap_sup: Option<f64>,
    pub gap_per_spin: Option<f64>,
    pub event: Option<bool>,
    pub value: Option<f64>,
}

impl Row {
    pub fn new(replica: usize, seed: u64, label: impl Into<String>) -> Self {
        Self {
            replica,
            seed,
            label: label.into(),
            log_z: None,
            tap_sup: None,
            gap_per_spin: None,
            event: None,
            value: None,
        }
    }
}

pub const CSV_HEADER: [&str; 8] = ["replica", "seed", "label", "log_z", "tap_sup", "gap_per_spin", "event", "value"];

/// Summary statistics of a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: u64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Normal-approximation 95% interval for the mean.
    pub ci95: (f64, f64),
}

impl Summary {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        let half = 1.96 * (var / n).sqrt();
        Some(Self {
            count: xs.len() as u64,
            mean,
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ci95: (mean - half, mean + half),
        })
    }
}

/// Data for a histogram plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub title: String,
    pub x_label: String,
    pub values: Vec<f64>,
    /// Vertical marker, typically the asserted limit.
    pub marker: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub criterion: usize,
    pub config: BTreeMap<String, String>,
    pub checks: Vec<Check>,
    pub aggregates: BTreeMap<String, Summary>,
    pub notes: Vec<String>,
    pub passed: bool,
    pub version: String,
    #[serde(skip)]
    pub rows: Vec<Row>,
    #[serde(skip)]
    pub histogram: Option<Histogram>,
}

impl ExperimentReport {
    pub fn new(experiment: &str, config: BTreeMap<String, String>) -> Self {
        Self {
            experiment: experiment.to_string(),
            criterion: crate::config::criterion_of(experiment).unwrap_or(0),
            config,
            checks: Vec::new(),
            aggregates: BTreeMap::new(),
            notes: Vec::new(),
            passed: false,
            version: env!("CARGO_PKG_VERSION").to_string(),
            rows: Vec::new(),
            histogram: None,
        }
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn aggregate(&mut self, name: &str, xs: &[f64]) {
        if let Some(s) = Summary::of(xs) {
            self.aggregates.insert(name.to_string(), s);
        }
    }

    pub fn finish(mut self) -> Self {
        self.passed = !self.checks.is_empty() && self.checks.iter().all(|c| c.passed);
        self
    }

    /// One line per check plus the verdict.
    pub fn summary_lines(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .checks
            .iter()
            .map(|c| {
                format!(
                    "  [{}] {}: observed {:.6e}, tolerance {}, n = {}, failures = {}",
                    if c.passed { "ok" } else { "!!" },
                    c.name,
                    c.observed,
                    c.tolerance,
                    c.sample_size,
                    c.failures
                )
            })
            .collect();
        out.push(format!(
            "criterion {:>2} {}: {}",
            self.criterion,
            self.experiment,
            if self.passed { "PASS" } else { "FAIL (margin violated)" }
        ));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(CSV_HEADER)?;
        let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
        for r in &self.rows {
            wr.write_record([
                r.replica.to_string(),
                r.seed.to_string(),
                r.label.clone(),
                opt(r.log_z),
                opt(r.tap_sup),
                opt(r.gap_per_spin),
                r.event.map(|e| u8::from(e).to_string()).unwrap_or_default(),
                opt(r.value),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Writes `report.json`, `rows.csv` and `plot.svg` under `dir/<experiment>/`.
    pub fn write_all(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let sub = dir.join(&self.experiment);
        std::fs::create_dir_all(&sub)?;
        std::fs::write(sub.join("report.json"), self.to_json() + "\n")?;
        let file = std::fs::File::create(sub.join("rows.csv"))?;
        self.write_csv(file).map_err(std::io::Error::other)?;
        if let Some(h) = &self.histogram {
            std::fs::write(sub.join("plot.svg"), crate::plot::histogram_svg(h))?;
        }
        Ok(sub)
    }
}

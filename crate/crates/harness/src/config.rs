//! Flat `key = value` experiment configuration.
//!
//! Lines starting with `#` are comments. Lists are comma separated.
//! Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "TAPBOUND_OUT";
pub const DEFAULT_OUT: &str = "tapbound-out";

/// Experiment names in criterion order.
pub const EXPERIMENTS: [&str; 11] = [
    "beta-zero-exactness",
    "zero-disorder-tightness",
    "gaussian-law",
    "recentering-law",
    "gradient-check",
    "cover-property",
    "slice-entropy",
    "onsager-frequency",
    "theorem-bound",
    "entropy-lemmas",
    "series-identities",
];

pub fn criterion_of(experiment: &str) -> Option<usize> {
    EXPERIMENTS.iter().position(|e| *e == experiment).map(|i| i + 1)
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid configuration: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    None,
    Linear,
    QuadraticSpike,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Ising,
    Sphere,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub n: usize,
    /// Mixture coefficients `c_0, c_1, ...` of `xi`.
    pub xi: Vec<f64>,
    pub betas: Vec<f64>,
    pub field_kind: FieldKind,
    /// Field strengths `h`, one model per entry.
    pub fields: Vec<f64>,
    pub measure: MeasureKind,
    pub epsilon: f64,
    pub eta: f64,
    pub delta: f64,
    /// Asserted per-spin margin.
    pub delta_check: f64,
    pub replicas: usize,
    pub mc_samples: usize,
    pub tap_starts: usize,
    /// Fixed point pairs, random pairs or probe points, depending on the experiment.
    pub points: usize,
    /// Second dimension: exhaustive Ising size, sphere size or lemma dimension.
    pub n_aux: usize,
    /// Replicas for the auxiliary part (sphere bound).
    pub aux_replicas: usize,
    /// Squared norm of the recentering point.
    pub q: f64,
    pub seed: u64,
    pub out: PathBuf,
}

fn default_out() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

impl ExperimentConfig {
    /// Documented defaults, which are the acceptance settings.
    pub fn defaults(experiment: &str) -> Result<Self, ConfigError> {
        let base = Self {
            experiment: experiment.to_string(),
            n: 8,
            xi: vec![0.0, 0.0, 1.0],
            betas: vec![1.0],
            field_kind: FieldKind::Linear,
            fields: vec![0.0],
            measure: MeasureKind::Ising,
            epsilon: 0.05,
            eta: 0.4,
            delta: 0.1,
            delta_check: 0.0,
            replicas: 1,
            mc_samples: 0,
            tap_starts: 8,
            points: 0,
            n_aux: 0,
            aux_replicas: 0,
            q: 0.0,
            seed: 20240917,
            out: default_out(),
        };
        let c = match experiment {
            "beta-zero-exactness" => Self {
                n: 16,
                xi: vec![0.0, 0.0, 1.0, 0.5],
                betas: vec![0.0],
                fields: vec![0.3],
                replicas: 3,
                delta_check: 1e-10,
                ..base
            },
            "zero-disorder-tightness" => Self {
                n: 16,
                xi: vec![0.0],
                betas: vec![1.0],
                fields: vec![0.1, 0.4, 1.0],
                delta_check: 1e-6,
                ..base
            },
            "gaussian-law" => Self {
                n: 8,
                xi: vec![0.0, 0.0, 1.0, 0.5],
                replicas: 20000,
                points: 10,
                delta_check: 5.0,
                ..base
            },
            "recentering-law" => Self {
                n: 8,
                xi: vec![0.0, 0.0, 1.0, 0.5],
                replicas: 20000,
                points: 10,
                q: 0.25,
                delta_check: 5.0,
                ..base
            },
            "gradient-check" => Self {
                n: 10,
                xi: vec![0.0, 0.3, 1.0, 0.5, 0.2],
                replicas: 100,
                delta_check: 1e-6,
                ..base
            },
            "cover-property" => Self {
                n: 16,
                fields: vec![0.1],
                points: 1000,
                n_aux: 12,
                ..base
            },
            "slice-entropy" => Self {
                n: 12,
                fields: vec![0.1],
                eta: 0.025,
                epsilon: 0.025 * 0.025,
                replicas: 50,
                ..base
            },
            "onsager-frequency" => Self {
                n: 14,
                betas: vec![0.3],
                field_kind: FieldKind::None,
                delta: 0.2,
                replicas: 200,
                delta_check: 3.0,
                ..base
            },
            "theorem-bound" => Self {
                n: 14,
                betas: vec![0.2, 0.4],
                fields: vec![0.0, 0.3],
                measure: MeasureKind::Both,
                replicas: 100,
                delta_check: 0.5,
                mc_samples: 100_000,
                n_aux: 16,
                aux_replicas: 25,
                ..base
            },
            "entropy-lemmas" => Self {
                n: 10,
                points: 10_000,
                n_aux: 20,
                replicas: 100,
                ..base
            },
            "tap-max" => Self {
                n: 14,
                betas: vec![0.4],
                fields: vec![0.3],
                ..base
            },
            "series-identities" => Self {
                replicas: 1000,
                delta_check: 1e-12,
                ..base
            },
            other => {
                return Err(ConfigError::Invalid(vec![format!(
                    "unknown experiment {other:?}; expected one of {}",
                    EXPERIMENTS.join(", ")
                )]))
            }
        };
        Ok(c)
    }

    /// Parses a config file body. The `experiment` key selects the defaults the other keys override.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut pairs: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: i + 1,
                msg: format!("expected key = value, got {line:?}"),
            })?;
            pairs.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let name = pairs
            .iter()
            .find(|(_, k, _)| k == "experiment")
            .map(|(_, _, v)| v.clone())
            .ok_or_else(|| ConfigError::Invalid(vec!["missing key experiment".into()]))?;
        let mut c = Self::defaults(&name)?;
        for (line, k, v) in &pairs {
            c.set(k, v).map_err(|msg| ConfigError::Parse { line: *line, msg })?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
        }
        fn list(key: &str, v: &str) -> Result<Vec<f64>, String> {
            v.split(',').map(|s| num(key, s.trim())).collect()
        }
        match key {
            "experiment" => {}
            "n" => self.n = num(key, value)?,
            "xi" => self.xi = list(key, value)?,
            "betas" => self.betas = list(key, value)?,
            "field_kind" => {
                self.field_kind = match value {
                    "none" => FieldKind::None,
                    "linear" => FieldKind::Linear,
                    "quadratic_spike" => FieldKind::QuadraticSpike,
                    _ => return Err(format!("field_kind: unknown {value:?}")),
                }
            }
            "fields" => self.fields = list(key, value)?,
            "measure" => {
                self.measure = match value {
                    "ising" => MeasureKind::Ising,
                    "sphere" => MeasureKind::Sphere,
                    "both" => MeasureKind::Both,
                    _ => return Err(format!("measure: unknown {value:?}")),
                }
            }
            "epsilon" => self.epsilon = num(key, value)?,
            "eta" => self.eta = num(key, value)?,
            "delta" => self.delta = num(key, value)?,
            "delta_check" => self.delta_check = num(key, value)?,
            "replicas" => self.replicas = num(key, value)?,
            "mc_samples" => self.mc_samples = num(key, value)?,
            "tap_starts" => self.tap_starts = num(key, value)?,
            "points" => self.points = num(key, value)?,
            "n_aux" => self.n_aux = num(key, value)?,
            "aux_replicas" => self.aux_replicas = num(key, value)?,
            "q" => self.q = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Echo of every key in file syntax, sorted.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut m = BTreeMap::new();
        m.insert("experiment".into(), self.experiment.clone());
        m.insert("n".into(), self.n.to_string());
        m.insert("xi".into(), join(&self.xi));
        m.insert("betas".into(), join(&self.betas));
        m.insert("field_kind".into(), serde_json::to_value(self.field_kind).unwrap().as_str().unwrap().to_string());
        m.insert("fields".into(), join(&self.fields));
        m.insert("measure".into(), serde_json::to_value(self.measure).unwrap().as_str().unwrap().to_string());
        m.insert("epsilon".into(), self.epsilon.to_string());
        m.insert("eta".into(), self.eta.to_string());
        m.insert("delta".into(), self.delta.to_string());
        m.insert("delta_check".into(), self.delta_check.to_string());
        m.insert("replicas".into(), self.replicas.to_string());
        m.insert("mc_samples".into(), self.mc_samples.to_string());
        m.insert("tap_starts".into(), self.tap_starts.to_string());
        m.insert("points".into(), self.points.to_string());
        m.insert("n_aux".into(), self.n_aux.to_string());
        m.insert("aux_replicas".into(), self.aux_replicas.to_string());
        m.insert("q".into(), self.q.to_string());
        m.insert("seed".into(), self.seed.to_string());
        m
    }

    fn k_field(&self) -> usize {
        1
    }

    /// Lists every violated constraint.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut bad = Vec::new();
        if self.n == 0 {
            bad.push("n must be positive".to_string());
        }
        if self.xi.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            bad.push("xi coefficients must be finite and nonnegative".into());
        }
        if self.betas.is_empty() || self.betas.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            bad.push("betas must be a nonempty list of nonnegative numbers".into());
        }
        if self.fields.is_empty() || self.fields.iter().any(|h| !h.is_finite()) {
            bad.push("fields must be a nonempty list of finite numbers".into());
        }
        if !(self.delta > 0.0) {
            bad.push("delta must be positive".into());
        }
        match self.experiment.as_str() {
            "cover-property" | "onsager-frequency" => {
                if !(self.eta > 0.0 && self.eta < 1.0) {
                    bad.push("eta must lie in (0, 1)".into());
                }
                if !(self.epsilon > 0.0 && self.epsilon <= self.eta / 2.0) {
                    bad.push(format!("epsilon = {} must satisfy 0 < epsilon <= eta/2 = {}", self.epsilon, self.eta / 2.0));
                }
            }
            "slice-entropy" => {
                if !(self.eta > 0.0 && self.eta <= (self.k_field() as f64).powf(-0.5)) {
                    bad.push(format!("eta = {} must satisfy 0 < eta <= K^(-1/2)", self.eta));
                }
                if !(self.epsilon > 0.0 && self.epsilon <= self.eta * self.eta) {
                    bad.push(format!("epsilon = {} must satisfy 0 < epsilon <= eta^2 = {}", self.epsilon, self.eta * self.eta));
                }
                if self.n > tapbound::partition::SLICE_MAX_N {
                    bad.push(format!("n = {} exceeds the slice enumeration limit", self.n));
                }
            }
            _ => {}
        }
        if matches!(self.experiment.as_str(), "theorem-bound" | "onsager-frequency" | "beta-zero-exactness" | "zero-disorder-tightness") {
            let degree = self.xi.iter().rposition(|c| *c > 0.0).unwrap_or(0);
            let limit = tapbound::partition::ising_enumeration_limit(degree);
            if self.measure != MeasureKind::Sphere && self.n > limit {
                bad.push(format!("n = {} exceeds the Ising enumeration limit {limit} at degree {degree}", self.n));
            }
        }
        if self.experiment == "theorem-bound" && self.measure != MeasureKind::Ising && self.mc_samples < 100 {
            bad.push("mc_samples must be at least 100 for the sphere bound".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(bad))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_overrides() {
        let c = ExperimentConfig::parse("experiment = theorem-bound\n# comment\nn = 10\nbetas = 0.1, 0.2\nseed=7 # trailing\n").unwrap();
        assert_eq!(c.n, 10);
        assert_eq!(c.betas, vec![0.1, 0.2]);
        assert_eq!(c.seed, 7);
        assert_eq!(c.replicas, 100);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(ExperimentConfig::parse("n = 3"), Err(ConfigError::Invalid(_))));
        assert!(matches!(ExperimentConfig::parse("experiment = gaussian-law\nbogus = 1"), Err(ConfigError::Parse { line: 2, .. })));
        assert!(matches!(ExperimentConfig::parse("experiment = gaussian-law\nn"), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn validation_lists_every_violation() {
        let c = ExperimentConfig::parse("experiment = cover-property\nepsilon = 0.3\ndelta = 0").unwrap();
        match c.validate() {
            Err(ConfigError::Invalid(v)) => assert_eq!(v.len(), 2),
            other => panic!("{other:?}"),
        }
        for e in EXPERIMENTS {
            ExperimentConfig::defaults(e).unwrap().validate().unwrap();
        }
    }
}

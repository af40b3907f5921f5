//! Experiment configuration: built-in defaults per experiment, overlaid by an
//! optional file (flat `key=value` lines or a JSON object), overlaid by
//! command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Gaussian,
    Gmm,
    Lda,
    Penguins,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Vb,
    Vm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Vb => "vb",
            Method::Vm => "vm",
        }
    }
}

/// How each Gaussian-mean posterior is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GaussianFitter {
    Conjugate,
    Svi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Observations (documents for LDA), including the outlier slot.
    pub n: usize,
    pub groups: usize,
    pub replications: usize,
    /// Outlier multipliers `i`; 0 means no outlier.
    pub multipliers: Vec<f64>,
    pub levels: Vec<f64>,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub out: PathBuf,

    // Gaussian coverage
    pub true_mean: f64,
    pub noise_var: f64,
    pub prior_var: f64,
    pub fitter: GaussianFitter,
    pub svi_steps: usize,

    // Mixtures (simulated and penguins)
    pub components: usize,
    pub cluster_means: Vec<f64>,
    /// Apply the square-root covariance rescale to the median predictive.
    pub rescale: bool,
    pub grid: usize,
    pub region_level: f64,
    pub cavi_max_iters: usize,
    pub cavi_tol: f64,

    // LDA
    pub mean_doc_len: f64,
    pub vocab: usize,
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub outlier_lengths: Vec<usize>,
    pub phi_samples: usize,
    pub kl_smoothing: f64,

    // Penguins
    pub csv: Option<PathBuf>,
    pub columns: Vec<String>,
    pub rows: usize,
    pub outlier_factor: f64,
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let base = Self {
            kind,
            n: 100,
            groups: 10,
            replications: 50,
            multipliers: (1..=15).map(f64::from).collect(),
            levels: vec![0.8, 0.9, 0.95],
            seed: 42,
            methods: vec![Method::Vb, Method::Vm],
            out: PathBuf::from("results"),
            true_mean: 2.0,
            noise_var: 1.0,
            prior_var: 100.0,
            fitter: GaussianFitter::Conjugate,
            svi_steps: 4000,
            components: 2,
            cluster_means: vec![2.0, 4.0],
            rescale: true,
            grid: 200,
            region_level: 0.95,
            cavi_max_iters: 500,
            cavi_tol: 1e-8,
            mean_doc_len: 10.0,
            vocab: 4,
            topics: 2,
            alpha: 2.0,
            beta: 1.0,
            outlier_lengths: [0, 1, 2, 4, 8, 16, 32].iter().map(|k| 10 * k).collect(),
            phi_samples: 100,
            kl_smoothing: 1e-3,
            csv: None,
            columns: vec!["bill_length_mm".into(), "bill_depth_mm".into()],
            rows: 299,
            outlier_factor: 5.0,
        };
        match kind {
            ExperimentKind::Gaussian => base,
            ExperimentKind::Gmm => Self {
                n: 200,
                groups: 5,
                replications: 1,
                multipliers: vec![0.0, 5.0, 10.0, 15.0],
                levels: vec![0.95],
                ..base
            },
            ExperimentKind::Lda => Self {
                n: 20,
                groups: 5,
                replications: 20,
                levels: vec![],
                ..base
            },
            ExperimentKind::Penguins => Self {
                groups: 5,
                replications: 1,
                levels: vec![0.95],
                ..base
            },
        }
    }

    /// Overlays `file` (if any) and then `overrides` on the defaults for
    /// `kind`, and validates the result.
    pub fn resolve(kind: ExperimentKind, file: Option<&Path>, overrides: &Map<String, Value>) -> Result<Self> {
        let mut value = serde_json::to_value(Self::defaults(kind))?;
        let obj = value.as_object_mut().expect("config serialises to an object");
        let mut set = |k: &str, v: Value| {
            // a single value for a list-valued key is a one-element list
            let v = match (obj.get(k), v) {
                (Some(Value::Array(_)), v @ (Value::Number(_) | Value::String(_) | Value::Bool(_))) => {
                    Value::Array(vec![v])
                }
                (_, v) => v,
            };
            obj.insert(k.to_string(), v);
        };
        if let Some(path) = file {
            for (k, v) in read_config_file(path)? {
                set(&k, v);
            }
        }
        for (k, v) in overrides {
            set(k, v.clone());
        }
        obj.insert("kind".into(), serde_json::to_value(kind)?);
        let cfg: Self = serde_json::from_value(value).map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::ConfigInvalid(msg));
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.groups == 0 || 2 * self.groups > self.n {
            return bad(format!(
                "groups must satisfy 1 <= m <= n/2 (m={}, n={})",
                self.groups, self.n
            ));
        }
        if let Some(l) = self.levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return bad(format!("level {l} is not in (0, 1)"));
        }
        if !(self.region_level > 0.0 && self.region_level < 1.0) {
            return bad("region_level must be in (0, 1)".into());
        }
        if self.multipliers.iter().any(|i| !(*i >= 0.0 && i.is_finite())) {
            return bad("multipliers must be finite and nonnegative".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if !(self.noise_var > 0.0 && self.prior_var > 0.0) {
            return bad("noise_var and prior_var must be positive".into());
        }
        if self.components == 0 || self.topics == 0 || self.vocab < 2 {
            return bad("components and topics must be positive and vocab at least 2".into());
        }
        if self.grid < 3 {
            return bad("grid must be at least 3".into());
        }
        if self.kind == ExperimentKind::Gmm && self.cluster_means.len() != self.components {
            return bad("cluster_means needs one entry per component".into());
        }
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.kl_smoothing > 0.0 && self.mean_doc_len > 0.0) {
            return bad("alpha, beta, kl_smoothing and mean_doc_len must be positive".into());
        }
        if self.phi_samples == 0 {
            return bad("phi_samples must be positive".into());
        }
        if self.kind == ExperimentKind::Penguins && self.columns.len() != 2 {
            return bad("penguins needs exactly two columns".into());
        }
        Ok(())
    }
}

/// Parses a config file as a JSON object, or failing that as flat
/// `key=value` lines (`#` starts a comment).
pub fn read_config_file(path: &Path) -> Result<Map<String, Value>> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => HarnessError::FileNotFound(path.to_path_buf()),
        _ => HarnessError::Io(e),
    })?;
    if text.trim_start().starts_with('{') {
        return match serde_json::from_str::<Value>(&text)? {
            Value::Object(map) => Ok(map),
            _ => Err(HarnessError::ConfigInvalid("config JSON must be an object".into())),
        };
    }
    let mut map = Map::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| HarnessError::ConfigInvalid(format!("line {}: expected key=value", lineno + 1)))?;
        map.insert(k.trim().to_string(), parse_flat_value(v.trim()));
    }
    Ok(map)
}

/// Interprets a flat value: JSON literal if it parses, a list if it contains
/// commas, otherwise a string.
pub fn parse_flat_value(raw: &str) -> Value {
    if let Ok(v) = serde_json::from_str::<Value>(raw) {
        return v;
    }
    if raw.contains(',') {
        return Value::Array(
            raw.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(parse_flat_value)
                .collect(),
        );
    }
    Value::String(raw.to_string())
}

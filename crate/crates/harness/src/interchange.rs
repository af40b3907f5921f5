//! JSON interchange of posteriors and ad-hoc median aggregation.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use vmpost_core::median::{
    gaussian_geometric_median, gmm_median, metric_median, weiszfeld_median, DistanceKind, DEFAULT_FIXED_POINT_ITERS,
};
use vmpost_core::{DiscreteMeasure, GaussianDist, GaussianMixture, RbfKernel, SubsetPosteriorSet};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    /// Row-major covariance.
    pub cov: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PosteriorFile {
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
    Gmm {
        weights: Vec<f64>,
        components: Vec<GaussianSpec>,
    },
    Discrete {
        atoms: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::ConfigInvalid(msg.into())
}

fn to_gaussian(mean: &[f64], cov: &[Vec<f64>]) -> Result<GaussianDist> {
    let d = mean.len();
    if cov.len() != d || cov.iter().any(|r| r.len() != d) {
        return Err(invalid(format!("covariance must be {d}x{d}")));
    }
    let flat: Vec<f64> = cov.iter().flatten().cloned().collect();
    Ok(GaussianDist::new(
        DVector::from_column_slice(mean),
        DMatrix::from_row_slice(d, d, &flat),
    )?)
}

fn from_gaussian(g: &GaussianDist) -> GaussianSpec {
    GaussianSpec {
        mean: g.mean().iter().cloned().collect(),
        cov: g.cov().row_iter().map(|r| r.iter().cloned().collect()).collect(),
    }
}

impl PosteriorFile {
    pub fn kind(&self) -> &'static str {
        match self {
            PosteriorFile::Gaussian { .. } => "gaussian",
            PosteriorFile::Gmm { .. } => "gmm",
            PosteriorFile::Discrete { .. } => "discrete",
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => HarnessError::FileNotFound(path.to_path_buf()),
            _ => HarnessError::Io(e),
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn gaussian(&self) -> Result<GaussianDist> {
        match self {
            PosteriorFile::Gaussian { mean, cov } => to_gaussian(mean, cov),
            other => Err(invalid(format!("expected a gaussian, found {}", other.kind()))),
        }
    }

    pub fn mixture(&self) -> Result<GaussianMixture> {
        match self {
            PosteriorFile::Gmm { weights, components } => {
                let comps = components
                    .iter()
                    .map(|c| to_gaussian(&c.mean, &c.cov))
                    .collect::<Result<Vec<_>>>()?;
                Ok(GaussianMixture::new(weights.clone(), comps)?)
            }
            other => Err(invalid(format!("expected a gmm, found {}", other.kind()))),
        }
    }

    pub fn discrete(&self) -> Result<DiscreteMeasure> {
        match self {
            PosteriorFile::Discrete { atoms, weights } => Ok(DiscreteMeasure::new(
                atoms.iter().map(|a| DVector::from_column_slice(a)).collect(),
                weights.clone(),
            )?),
            other => Err(invalid(format!("expected a discrete measure, found {}", other.kind()))),
        }
    }

    pub fn from_gaussian(g: &GaussianDist) -> Self {
        let spec = from_gaussian(g);
        PosteriorFile::Gaussian {
            mean: spec.mean,
            cov: spec.cov,
        }
    }

    pub fn from_mixture(g: &GaussianMixture) -> Self {
        PosteriorFile::Gmm {
            weights: g.weights().to_vec(),
            components: g.components().iter().map(from_gaussian).collect(),
        }
    }

    pub fn from_discrete(q: &DiscreteMeasure) -> Self {
        PosteriorFile::Discrete {
            atoms: q.atoms().iter().map(|a| a.iter().cloned().collect()).collect(),
            weights: q.weights().to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MedianKind {
    Geometric,
    Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianOutput {
    pub method: String,
    pub objective: f64,
    pub distances: Vec<f64>,
    /// Weiszfeld weights or coupling masses, when the method produces them.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Index of the selected input for the metric median.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected: Option<usize>,
    pub result: PosteriorFile,
}

/// Aggregates posteriors of one kind. `bandwidth` fixes the RBF kernel for
/// discrete measures (default: median heuristic).
pub fn aggregate(inputs: &[PosteriorFile], kind: MedianKind, bandwidth: Option<f64>) -> Result<MedianOutput> {
    let first = inputs.first().ok_or_else(|| invalid("no posteriors given"))?;
    if let Some(other) = inputs.iter().find(|p| p.kind() != first.kind()) {
        return Err(invalid(format!("mixed kinds: {} and {}", first.kind(), other.kind())));
    }
    let metric = |pairwise: &DMatrix<f64>, index: usize, radius: f64, result: PosteriorFile| MedianOutput {
        method: "metric".into(),
        objective: radius,
        distances: pairwise.row(index).iter().cloned().collect(),
        weights: None,
        selected: Some(index),
        result,
    };
    match first {
        PosteriorFile::Gaussian { .. } => {
            let set = SubsetPosteriorSet::from_posteriors(inputs.iter().map(|p| p.gaussian()).collect::<Result<_>>()?)?;
            Ok(match kind {
                MedianKind::Geometric => {
                    let r = gaussian_geometric_median(&set, DEFAULT_FIXED_POINT_ITERS, None)?;
                    MedianOutput {
                        method: "geometric".into(),
                        objective: r.objective,
                        distances: r.distances,
                        weights: None,
                        selected: None,
                        result: PosteriorFile::from_gaussian(&r.result),
                    }
                }
                MedianKind::Metric => {
                    let r = metric_median(&set, &DistanceKind::BuresW2)?;
                    metric(
                        &r.pairwise,
                        r.index,
                        r.radius,
                        PosteriorFile::from_gaussian(&r.posterior),
                    )
                }
            })
        }
        PosteriorFile::Gmm { .. } => {
            let set = SubsetPosteriorSet::from_posteriors(inputs.iter().map(|p| p.mixture()).collect::<Result<_>>()?)?;
            Ok(match kind {
                MedianKind::Geometric => {
                    let r = gmm_median(&set)?.report;
                    MedianOutput {
                        method: "geometric".into(),
                        objective: r.objective,
                        distances: r.distances,
                        weights: Some(r.weights),
                        selected: None,
                        result: PosteriorFile::from_mixture(&r.result),
                    }
                }
                MedianKind::Metric => {
                    let r = metric_median(&set, &DistanceKind::BuresW2)?;
                    metric(
                        &r.pairwise,
                        r.index,
                        r.radius,
                        PosteriorFile::from_mixture(&r.posterior),
                    )
                }
            })
        }
        PosteriorFile::Discrete { .. } => {
            let measures: Vec<DiscreteMeasure> = inputs.iter().map(|p| p.discrete()).collect::<Result<_>>()?;
            let kernel = match bandwidth {
                Some(h) => RbfKernel::new(h)?,
                None => RbfKernel::median_heuristic(&measures)?,
            };
            let set = SubsetPosteriorSet::from_posteriors(measures)?;
            Ok(match kind {
                MedianKind::Geometric => {
                    let r = weiszfeld_median(&set, &kernel, 1e-10)?;
                    MedianOutput {
                        method: "geometric".into(),
                        objective: r.objective,
                        distances: r.distances,
                        weights: Some(r.weights),
                        selected: None,
                        result: PosteriorFile::from_discrete(&r.result),
                    }
                }
                MedianKind::Metric => {
                    let r = metric_median(&set, &DistanceKind::Mmd(kernel))?;
                    metric(
                        &r.pairwise,
                        r.index,
                        r.radius,
                        PosteriorFile::from_discrete(&r.posterior),
                    )
                }
            })
        }
    }
}

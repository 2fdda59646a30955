//! Reduction of embedding sets to 2D/3D for cluster inspection: a linear
//! PCA baseline, a UMAP-style nonlinear layout, and trustworthiness as the
//! neighbourhood-preservation check.

mod pca;
mod trust;
mod umap;

use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::Label;

pub use pca::{fit_pca, pca, Pca};
pub use trust::trustworthiness;
pub use umap::{fit_ab, fuzzy_graph, knn_graph, smooth_knn, umap, FuzzyGraph, KnnGraph};

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("need at least two points")]
    DegenerateInput,
    #[error("too few points: {count} points for n_neighbors = {n_neighbors}")]
    TooFewPoints { count: usize, n_neighbors: usize },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ProjectionError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub target_dim: usize,
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self { target_dim: 3, n_neighbors: 15, min_dist: 0.1, epochs: 200, seed: 0 }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.target_dim) {
            return Err(ProjectionError::InvalidConfig(format!(
                "target_dim must be 2 or 3, got {}",
                self.target_dim
            )));
        }
        if self.n_neighbors < 1 {
            return Err(ProjectionError::InvalidConfig("n_neighbors must be positive".into()));
        }
        if !(self.min_dist.is_finite() && self.min_dist >= 0.0) {
            return Err(ProjectionError::InvalidConfig(format!(
                "min_dist must be non-negative, got {}",
                self.min_dist
            )));
        }
        Ok(())
    }
}

/// Low-dimensional coordinates aligned with the input rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub ids: Vec<String>,
    pub dim: usize,
    /// Row-major, `ids.len() * dim` values.
    pub coords: Vec<f64>,
}

impl Projection {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }

    /// Plot-ready CSV: `id,x,y[,z][,label][,highlight]`.
    pub fn write_csv<W: Write>(
        &self,
        out: W,
        labels: Option<&[Label]>,
        highlight: Option<&HashSet<String>>,
    ) -> Result<()> {
        if let Some(l) = labels {
            if l.len() != self.len() {
                return Err(ProjectionError::DimMismatch(format!(
                    "{} labels for {} points",
                    l.len(),
                    self.len()
                )));
            }
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["id".to_string()];
        header.extend(["x", "y", "z"].iter().take(self.dim).map(|s| s.to_string()));
        if labels.is_some() {
            header.push("label".into());
        }
        if highlight.is_some() {
            header.push("highlight".into());
        }
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![self.ids[i].clone()];
            rec.extend(self.point(i).iter().map(|c| c.to_string()));
            if let Some(l) = labels {
                rec.push(l[i].to_string());
            }
            if let Some(h) = highlight {
                rec.push((h.contains(&self.ids[i]) as u8).to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn sq_dist_f32(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

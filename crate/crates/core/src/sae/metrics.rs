//! Representation statistics of latent codes.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// N x d matrix of latent activations, always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCodes(Array2<f64>);

impl LatentCodes {
    pub fn new(codes: Array2<f64>) -> Result<Self> {
        if let Some(((r, c), v)) = codes.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite latent {v} at row {r}, column {c}"
            )));
        }
        Ok(LatentCodes(codes))
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.0
    }

    pub fn n_samples(&self) -> usize {
        self.0.nrows()
    }

    pub fn latent_width(&self) -> usize {
        self.0.ncols()
    }
}

/// Number of latent columns whose largest magnitude exceeds `eps_active`.
pub fn active_feature_count(codes: &LatentCodes, eps_active: f64) -> usize {
    codes
        .0
        .axis_iter(Axis(1))
        .filter(|col| col.iter().any(|v| v.abs() > eps_active))
        .count()
}

/// Per-column fraction of rows with `|h| > eps_active`.
pub fn activation_frequency(codes: &LatentCodes, eps_active: f64) -> Array1<f64> {
    let n = codes.n_samples().max(1) as f64;
    codes.0.map_axis(Axis(0), |col| {
        col.iter().filter(|v| v.abs() > eps_active).count() as f64 / n
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityStats {
    /// Fraction of active latents, per row.
    pub activity_ratio_per_row: Vec<f64>,
    /// Mean over rows of the active fraction.
    pub mean_activity_ratio: f64,
    /// Mean over rows of the inactive fraction, `1 - mean_activity_ratio`.
    pub mean_sparsity: f64,
}

pub fn per_sample_activity(codes: &LatentCodes, eps_active: f64) -> ActivityStats {
    let d = codes.latent_width().max(1) as f64;
    let per_row: Vec<f64> = codes
        .0
        .rows()
        .into_iter()
        .map(|row| row.iter().filter(|v| v.abs() > eps_active).count() as f64 / d)
        .collect();
    let mean = if per_row.is_empty() {
        0.0
    } else {
        per_row.iter().sum::<f64>() / per_row.len() as f64
    };
    ActivityStats {
        activity_ratio_per_row: per_row,
        mean_activity_ratio: mean,
        mean_sparsity: 1.0 - mean,
    }
}

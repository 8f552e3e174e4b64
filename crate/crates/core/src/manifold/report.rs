//! Severity sweeps and per-(layer, artifact) manifold reports.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::metrics::{curvature, intrinsic_dimension, pca_eigenvalues, selectivity};
use crate::error::{Error, Result};
use crate::store::{ActivationSet, SampleManifest};
use crate::ArtifactKind;

/// Feature rows for one artifact kind grouped by severity level.
#[derive(Debug, Clone, PartialEq)]
pub struct SeveritySweep {
    pub kind: ArtifactKind,
    /// Strictly increasing.
    pub levels: Vec<f64>,
    pub per_level: Vec<Array2<f64>>,
    /// Row t is the mean of `per_level[t]`.
    pub means: Array2<f64>,
}

impl SeveritySweep {
    pub fn new(kind: ArtifactKind, levels: Vec<f64>, per_level: Vec<Array2<f64>>) -> Result<Self> {
        if levels.len() != per_level.len() {
            return Err(Error::Argument(
                "one feature matrix is needed per level".into(),
            ));
        }
        if levels.len() < 3 {
            return Err(Error::Data(format!(
                "{kind} sweep needs at least 3 severity levels, found {}",
                levels.len()
            )));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument(
                "sweep levels must be strictly increasing".into(),
            ));
        }
        let width = per_level[0].ncols();
        if per_level
            .iter()
            .any(|m| m.ncols() != width || m.nrows() == 0)
        {
            return Err(Error::Data(
                "sweep levels must be non-empty with a common width".into(),
            ));
        }
        let mut means = Array2::zeros((levels.len(), width));
        for (t, m) in per_level.iter().enumerate() {
            means
                .row_mut(t)
                .assign(&m.mean_axis(Axis(0)).expect("non-empty"));
        }
        Ok(SeveritySweep {
            kind,
            levels,
            per_level,
            means,
        })
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn width(&self) -> usize {
        self.means.ncols()
    }

    /// All rows stacked level by level, with each row's severity.
    pub fn raw_samples(&self) -> (Array2<f64>, Vec<f64>) {
        let n: usize = self.per_level.iter().map(|m| m.nrows()).sum();
        let mut x = Array2::zeros((n, self.width()));
        let mut p = Vec::with_capacity(n);
        let mut r = 0;
        for (level, m) in self.levels.iter().zip(&self.per_level) {
            for row in m.rows() {
                x.row_mut(r).assign(&row);
                p.push(*level);
                r += 1;
            }
        }
        (x, p)
    }
}

/// Groups the rows tagged with `kind` by severity.
pub fn build_sweep(
    acts: &ActivationSet,
    manifest: &SampleManifest,
    kind: ArtifactKind,
) -> Result<SeveritySweep> {
    if manifest.records.len() != acts.n_samples() {
        return Err(Error::Data(format!(
            "manifest has {} records but activations have {} rows",
            manifest.records.len(),
            acts.n_samples()
        )));
    }
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for (i, rec) in manifest.records.iter().enumerate() {
        if rec.artifact_kind != Some(kind) {
            continue;
        }
        match groups.iter_mut().find(|(p, _)| *p == rec.severity) {
            Some((_, rows)) => rows.push(i),
            None => groups.push((rec.severity, vec![i])),
        }
    }
    groups.sort_by(|a, b| a.0.total_cmp(&b.0));
    let data = acts.data();
    let (levels, per_level) = groups
        .into_iter()
        .map(|(p, rows)| {
            let m = data.select(Axis(0), &rows).mapv(f64::from);
            (p, m)
        })
        .unzip();
    SeveritySweep::new(kind, levels, per_level)
}

/// Which point cloud the intrinsic dimension is measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionBasis {
    /// The T per-level mean vectors; at most T - 1 by construction.
    #[default]
    Trajectory,
    /// Every raw sample of the sweep.
    RawSamples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldReport {
    pub layer_id: String,
    pub artifact_kind: ArtifactKind,
    pub intrinsic_dim: usize,
    pub curvature: f64,
    pub selectivity: f64,
    pub rho: Vec<f64>,
    pub tau: f64,
    pub n_levels: usize,
    pub eigenvalues: Vec<f64>,
}

/// Intrinsic dimension and curvature from the sweep, selectivity from `raw`.
pub fn manifold_report(
    layer_id: &str,
    sweep: &SeveritySweep,
    raw: (ArrayView2<'_, f64>, &[f64]),
    tau: f64,
    basis: DimensionBasis,
) -> Result<ManifoldReport> {
    let (x, p) = raw;
    if x.ncols() != sweep.width() {
        return Err(Error::Argument(format!(
            "raw features have width {} but the sweep has {}",
            x.ncols(),
            sweep.width()
        )));
    }
    let eigenvalues = match basis {
        DimensionBasis::Trajectory => pca_eigenvalues(sweep.means.view())?,
        DimensionBasis::RawSamples => pca_eigenvalues(sweep.raw_samples().0.view())?,
    };
    let intrinsic_dim = intrinsic_dimension(&eigenvalues, tau)?;
    let curvature = curvature(sweep.means.view())?;
    let (rho, selectivity) = selectivity(x, p)?;
    Ok(ManifoldReport {
        layer_id: layer_id.to_string(),
        artifact_kind: sweep.kind,
        intrinsic_dim,
        curvature,
        selectivity,
        rho: rho.to_vec(),
        tau,
        n_levels: sweep.n_levels(),
        eigenvalues,
    })
}

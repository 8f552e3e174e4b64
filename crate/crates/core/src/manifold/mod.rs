//! Geometry of feature trajectories under graded artifacts.

mod metrics;
mod report;

pub use metrics::{curvature, intrinsic_dimension, pca_eigenvalues, selectivity, DEFAULT_TAU};
pub use report::{build_sweep, manifold_report, DimensionBasis, ManifoldReport, SeveritySweep};

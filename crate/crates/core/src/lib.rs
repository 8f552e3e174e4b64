//! Mechanistic-interpretability toolkit for deepfake detectors.
//!
//! Layer activations (from a real model dump or the built-in toy encoder) go
//! through sparse-autoencoder feature discovery and a forensic manifold
//! analysis that measures how features respond to graded warp, lighting,
//! blur and color perturbations.

pub mod error;
pub mod exec;
pub mod forge;
pub mod interventions;
mod kinds;
pub mod manifold;
pub mod pipeline;
pub mod store;

pub use error::{Error, Result};
pub use exec::Execution;
pub use kinds::{ArtifactKind, Authenticity};
pub mod sae;
pub mod toy;

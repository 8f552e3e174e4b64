//! Causal probes: sublayer ablation importance and latent steering.

mod importance;
mod steering;

pub use importance::{importance_table, layer_importance, AblationMode, ImportanceScore};
pub use steering::{
    apply_steering, steering_curve, steering_vector, Construction, LogisticHead, SteeringCurve,
    SteeringVector, CURVE_SETTINGS, DEFAULT_ALPHAS,
};

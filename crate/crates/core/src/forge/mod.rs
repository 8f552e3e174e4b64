//! Controlled forensic perturbations of face images.

pub mod analysis;
mod artifacts;
mod image;
pub mod synth;

pub use artifacts::{
    apply_artifact, band_weight, diffusion_steps, gaussian_kernel, severity_grid, warp_cap_px,
    warp_field, ArtifactSpec, COLOR_TINT, DEFAULT_MAX_BLUR_RADIUS_PX, DIFFUSION_STEP_SIGMA,
    LIGHTING_GAIN, WARP_CAP_FRACTION,
};
pub use image::{default_face_mask, Image, RegionMask, MIN_SIDE, STANDARD_SIDE};

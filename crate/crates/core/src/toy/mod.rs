//! A fully specified stand-in encoder with planted artifact-sensitive
//! directions, plus synthetic sparse data for autoencoder recovery tests.

mod encoder;
pub mod energy;
mod synthetic;

pub use encoder::{
    pooled_statistics, EncoderOutput, HookMode, ImageFeatures, InterventionHook, Sublayer,
    ToyEncoder, ToyEncoderConfig, POOLED_LEN, POOL_GRID,
};
pub use synthetic::{generate_synthetic_codes, SyntheticCodes, COEFFICIENT_RANGE, NOISE_SIGMA};

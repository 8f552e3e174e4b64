//! Run configuration, parsed from JSON.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forge::{DEFAULT_MAX_BLUR_RADIUS_PX, STANDARD_SIDE};
use crate::interventions::{AblationMode, DEFAULT_ALPHAS};
use crate::manifold::{DimensionBasis, DEFAULT_TAU};
use crate::sae::TrainConfig;
use crate::toy::ToyEncoderConfig;

pub const SEED_ENV: &str = "FM_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSource {
    Toy,
    /// Activation-store directories, one per layer, written by an external extractor.
    Dump {
        dir: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArtifactGridConfig {
    pub levels: usize,
    pub p_max: f64,
    pub max_blur_radius_px: f64,
}

impl Default for ArtifactGridConfig {
    fn default() -> Self {
        ArtifactGridConfig {
            levels: 8,
            p_max: 0.7,
            max_blur_radius_px: DEFAULT_MAX_BLUR_RADIUS_PX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model_source: ModelSource,
    pub n_real: usize,
    pub n_fake: usize,
    /// Base images per class in every severity sweep.
    pub sweep_real: usize,
    pub sweep_fake: usize,
    pub image_side: usize,
    pub sae: TrainConfig,
    pub artifacts: ArtifactGridConfig,
    /// Empty means every layer the model source provides.
    pub layers: Vec<String>,
    pub steering_layer: String,
    pub alphas: Vec<f64>,
    pub tau: f64,
    pub dimension_basis: DimensionBasis,
    pub ablation: AblationMode,
    /// Samples per class used for importance scores.
    pub importance_samples: usize,
    /// Absent means `FM_SEED`, then 0.
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub toy: ToyEncoderConfig,
    /// PNG faces to use instead of synthetic ones (toy source only).
    pub images_dir: Option<PathBuf>,
    /// Number of example PNGs written per artifact kind.
    pub save_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model_source: ModelSource::Toy,
            n_real: 250,
            n_fake: 250,
            sweep_real: 5,
            sweep_fake: 5,
            image_side: STANDARD_SIDE,
            sae: TrainConfig::default(),
            artifacts: ArtifactGridConfig::default(),
            layers: Vec::new(),
            steering_layer: "L5".into(),
            alphas: DEFAULT_ALPHAS.to_vec(),
            tau: DEFAULT_TAU,
            dimension_basis: DimensionBasis::Trajectory,
            ablation: AblationMode::Zero,
            importance_samples: 32,
            seed: None,
            output_dir: PathBuf::from("fm-output"),
            toy: ToyEncoderConfig::default(),
            images_dir: None,
            save_samples: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid run config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Flag, then config file, then `FM_SEED`, then 0.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> Result<u64> {
        let seed = match (flag, self.seed) {
            (Some(s), _) | (None, Some(s)) => s,
            (None, None) => match std::env::var(SEED_ENV) {
                Ok(v) => v.trim().parse().map_err(|_| {
                    Error::Config(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))
                })?,
                Err(_) => 0,
            },
        };
        self.seed = Some(seed);
        Ok(seed)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_real == 0 || self.n_fake == 0 {
            return bad("n_real and n_fake must be at least 1".into());
        }
        if self.sweep_real + self.sweep_fake == 0 {
            return bad("sweeps need at least one base image".into());
        }
        if self.image_side < crate::forge::MIN_SIDE {
            return bad(format!(
                "image_side must be at least {}",
                crate::forge::MIN_SIDE
            ));
        }
        if self.artifacts.levels < 3 {
            return bad("artifact grid needs at least 3 levels".into());
        }
        if !(self.artifacts.p_max > 0.0 && self.artifacts.p_max <= 1.0) {
            return bad(format!(
                "p_max must lie in (0, 1], got {}",
                self.artifacts.p_max
            ));
        }
        if !(self.artifacts.max_blur_radius_px >= 0.0
            && self.artifacts.max_blur_radius_px.is_finite())
        {
            return bad("max_blur_radius_px must be finite and >= 0".into());
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !a.is_finite()) {
            return bad("alphas must be a non-empty list of finite numbers".into());
        }
        if self.importance_samples == 0 {
            return bad("importance_samples must be at least 1".into());
        }
        if !self.layers.is_empty() && !self.layers.contains(&self.steering_layer) {
            return bad(format!(
                "steering layer {} is not among the selected layers",
                self.steering_layer
            ));
        }
        self.sae
            .validate()
            .map_err(|e| Error::Config(format!("sae: {e}")))?;
        match &self.model_source {
            ModelSource::Dump { dir } if !dir.is_dir() => {
                return bad(format!("dump directory {} does not exist", dir.display()));
            }
            ModelSource::Dump { .. } if self.images_dir.is_some() => {
                return bad("images_dir only applies to the toy model source".into());
            }
            _ => {}
        }
        if let Some(dir) = &self.images_dir {
            if !dir.is_dir() {
                return bad(format!("images directory {} does not exist", dir.display()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    One,
    Two,
    TwoB,
    Three,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::One, Stage::Two, Stage::TwoB, Stage::Three];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::One => "1",
            Stage::Two => "2",
            Stage::TwoB => "2b",
            Stage::Three => "3",
        }
    }

    pub fn file_stem(self) -> &'static str {
        match self {
            Stage::One => "stage1",
            Stage::Two => "stage2",
            Stage::TwoB => "stage2b",
            Stage::Three => "stage3",
        }
    }

    /// Stages that must have written their outputs first.
    pub fn prerequisites(self) -> &'static [Stage] {
        let all = &Stage::ALL;
        &all[..all.iter().position(|s| *s == self).expect("listed")]
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single stage or the whole pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageSelection {
    Only(Stage),
    All,
}

impl FromStr for StageSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().trim_start_matches("stage") {
            "1" => Ok(StageSelection::Only(Stage::One)),
            "2" => Ok(StageSelection::Only(Stage::Two)),
            "2b" => Ok(StageSelection::Only(Stage::TwoB)),
            "3" => Ok(StageSelection::Only(Stage::Three)),
            "all" => Ok(StageSelection::All),
            other => Err(Error::Argument(format!(
                "unknown stage {other:?}; expected 1, 2, 2b, 3 or all"
            ))),
        }
    }
}

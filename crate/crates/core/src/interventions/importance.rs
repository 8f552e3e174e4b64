//! Layerwise forensic importance by ablating one sublayer at a time.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::toy::{HookMode, ImageFeatures, InterventionHook, Sublayer, ToyEncoder};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceScore {
    pub block: usize,
    pub submodule: Sublayer,
    /// Mean |logit change|, finite and >= 0.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    #[default]
    Zero,
    /// Replace the output with its mean over the evaluated samples.
    Mean,
}

/// Mean over samples of |logit(clean) - logit(ablated target)|.
pub fn layer_importance(
    encoder: &ToyEncoder,
    samples: &[ImageFeatures],
    block: usize,
    submodule: Sublayer,
    mode: AblationMode,
    exec: Execution,
) -> Result<ImportanceScore> {
    if samples.is_empty() {
        return Err(Error::Argument(
            "importance needs at least one sample".into(),
        ));
    }
    encoder.check_hook(&InterventionHook::zero(block, submodule))?;
    let hook_mode = match mode {
        AblationMode::Zero => HookMode::ZeroAblate,
        AblationMode::Mean => {
            let outs = exec.map(samples, |f| encoder.sublayer_output(f, block, submodule));
            let mut sum: Option<Array1<f64>> = None;
            for o in outs {
                let o = o?;
                match sum.as_mut() {
                    Some(s) => *s += &o,
                    None => sum = Some(o),
                }
            }
            HookMode::MeanAblate(sum.expect("non-empty") / samples.len() as f64)
        }
    };
    let hook = [InterventionHook {
        block,
        sublayer: submodule,
        mode: hook_mode,
    }];
    let deltas = exec.map(samples, |f| -> Result<f64> {
        let clean = encoder.forward(f, &[])?.logit;
        let ablated = encoder.forward(f, &hook)?.logit;
        Ok((clean - ablated).abs())
    });
    let mut total = 0.0;
    for d in deltas {
        total += d?;
    }
    let score = total / samples.len() as f64;
    if !score.is_finite() {
        return Err(Error::Data(format!(
            "non-finite importance for block {block} {submodule}"
        )));
    }
    Ok(ImportanceScore {
        block,
        submodule,
        score,
    })
}

/// Scores for every (block, sublayer) pair, block-major.
pub fn importance_table(
    encoder: &ToyEncoder,
    samples: &[ImageFeatures],
    mode: AblationMode,
    exec: Execution,
) -> Result<Vec<ImportanceScore>> {
    let mut out = Vec::with_capacity(encoder.n_layers() * Sublayer::ALL.len());
    for block in 0..encoder.n_layers() {
        for tag in Sublayer::ALL {
            out.push(layer_importance(encoder, samples, block, tag, mode, exec)?);
        }
    }
    Ok(out)
}

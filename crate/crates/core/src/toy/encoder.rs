use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::energy::{artifact_energies, Energies};
use crate::error::{Error, Result};
use crate::forge::{default_face_mask, Image, RegionMask, STANDARD_SIDE};
use crate::kinds::ArtifactKind;

/// Side of the average-pooling grid over grayscale.
pub const POOL_GRID: usize = 8;
/// 8x8 pooled grayscale plus three channel means.
pub const POOLED_LEN: usize = POOL_GRID * POOL_GRID + 3;

/// Sublayer tags inside one encoder block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sublayer {
    #[serde(rename = "attn")]
    Attn,
    #[serde(rename = "attn.proj")]
    AttnProj,
    #[serde(rename = "mlp")]
    Mlp,
}

impl Sublayer {
    pub const ALL: [Sublayer; 3] = [Sublayer::AttnProj, Sublayer::Attn, Sublayer::Mlp];

    pub fn as_str(self) -> &'static str {
        match self {
            Sublayer::Attn => "attn",
            Sublayer::AttnProj => "attn.proj",
            Sublayer::Mlp => "mlp",
        }
    }
}

impl std::fmt::Display for Sublayer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Sublayer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "attn" => Ok(Sublayer::Attn),
            "attn.proj" => Ok(Sublayer::AttnProj),
            "mlp" => Ok(Sublayer::Mlp),
            _ => Err(Error::Argument(format!("unknown sublayer '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HookMode {
    ZeroAblate,
    /// Replace the sublayer output with a fixed vector (e.g. a dataset mean).
    MeanAblate(Array1<f64>),
    AddVector {
        v: Array1<f64>,
        alpha: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterventionHook {
    pub block: usize,
    pub sublayer: Sublayer,
    pub mode: HookMode,
}

impl InterventionHook {
    pub fn zero(block: usize, sublayer: Sublayer) -> Self {
        InterventionHook {
            block,
            sublayer,
            mode: HookMode::ZeroAblate,
        }
    }

    fn apply(&self, out: &mut Array1<f64>) {
        match &self.mode {
            HookMode::ZeroAblate => out.fill(0.0),
            HookMode::MeanAblate(mean) => out.assign(mean),
            HookMode::AddVector { v, alpha } => out.scaled_add(*alpha, v),
        }
    }
}

/// Construction parameters. Everything else is drawn from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyEncoderConfig {
    pub seed: u64,
    pub layer_widths: Vec<usize>,
    /// Planted gain per layer, indexed by artifact kind (warp, lighting, blur, color).
    pub gains: Vec<[f64; 4]>,
    /// Quadratic response coefficient per layer and kind: the planted
    /// coordinate is `e + k e^2`.
    pub curvature: Vec<[f64; 4]>,
    pub mix_scale: f64,
    pub carry_scale: f64,
    /// Logit weight per kind on the final layer's planted directions.
    pub logit_weights: [f64; 4],
    pub logit_bias: f64,
    pub feather_px: f64,
}

impl Default for ToyEncoderConfig {
    fn default() -> Self {
        ToyEncoderConfig {
            seed: 0,
            layer_widths: vec![256, 384, 512, 512, 768],
            gains: vec![
                [0.5, 0.5, 0.5, 0.3],
                [1.5, 1.0, 1.5, 0.4],
                [4.0, 2.0, 3.0, 0.6],
                [5.0, 2.5, 8.0, 0.8],
                [6.0, 2.5, 5.0, 4.0],
            ],
            curvature: vec![
                [0.0; 4],
                [0.0; 4],
                [0.8, 0.0, 0.0, 0.0],
                [0.8, 0.3, 0.0, 0.0],
                [0.0; 4],
            ],
            mix_scale: 1.0,
            carry_scale: 0.5,
            logit_weights: [1.0, 0.6, 1.0, 0.8],
            logit_bias: 0.0,
            feather_px: 16.0,
        }
    }
}

#[derive(Debug, Clone)]
struct ToyBlock {
    mix: Array2<f64>,
    carry: Option<Array2<f64>>,
    proj_gain: Array1<f64>,
    planted: Vec<Array1<f64>>,
    gains: [f64; 4],
    curvature: [f64; 4],
}

/// Image-derived inputs to the encoder, computed once per image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatures {
    pub pooled: Array1<f64>,
    pub energies: Energies,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub layers: Vec<Array1<f64>>,
    pub logit: f64,
}

/// A deterministic stand-in for a vision encoder with a real/fake logit head.
///
/// Block `i` computes
/// `attn = mix_i s + carry_i a_{i-1}`, `attn.proj = g_i * attn`,
/// `mlp = sum_k gamma_{i,k} phi(e_k) u_{i,k}` and outputs `attn.proj + mlp`,
/// where `s` are pooled image statistics, `e_k` closed-form artifact energies
/// and `u_{i,k}` orthonormal planted directions. The logit reads the last
/// block through `w = sum_k beta_k u_{L,k}`.
#[derive(Debug, Clone)]
pub struct ToyEncoder {
    config: ToyEncoderConfig,
    blocks: Vec<ToyBlock>,
    logit_weights: Array1<f64>,
    mask: RegionMask,
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    })
}

fn orthonormal_vectors(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Array1<f64>> {
    let mut out: Vec<Array1<f64>> = Vec::with_capacity(count);
    while out.len() < count {
        let mut v = Array1::from_shape_simple_fn(dim, || StandardNormal.sample(rng));
        for u in &out {
            let proj = v.dot(u);
            v.scaled_add(-proj, u);
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-8 {
            out.push(v / norm);
        }
    }
    out
}

impl ToyEncoder {
    pub fn new(config: ToyEncoderConfig) -> Result<Self> {
        let n = config.layer_widths.len();
        if n == 0 {
            return Err(Error::Config("toy encoder needs at least one layer".into()));
        }
        if config.gains.len() != n || config.curvature.len() != n {
            return Err(Error::Config(format!(
                "toy encoder has {n} layers but {} gain rows and {} curvature rows",
                config.gains.len(),
                config.curvature.len()
            )));
        }
        if config.layer_widths.iter().any(|&w| w < 4) {
            return Err(Error::Config("toy layer widths must be at least 4".into()));
        }
        if config
            .gains
            .iter()
            .flatten()
            .any(|g| !(g.is_finite() && *g >= 0.0))
        {
            return Err(Error::Config(
                "planted gains must be finite and non-negative".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut blocks = Vec::with_capacity(n);
        for (i, &width) in config.layer_widths.iter().enumerate() {
            let mix = gaussian_matrix(
                &mut rng,
                width,
                POOLED_LEN,
                config.mix_scale / (POOLED_LEN as f64).sqrt(),
            );
            let carry = (i > 0).then(|| {
                let prev = config.layer_widths[i - 1];
                gaussian_matrix(
                    &mut rng,
                    width,
                    prev,
                    config.carry_scale / (prev as f64).sqrt(),
                )
            });
            let proj_gain = Array1::from_shape_simple_fn(width, || {
                let z: f64 = StandardNormal.sample(&mut rng);
                1.0 + 0.1 * z
            });
            let planted = orthonormal_vectors(&mut rng, ArtifactKind::ALL.len(), width);
            blocks.push(ToyBlock {
                mix,
                carry,
                proj_gain,
                planted,
                gains: config.gains[i],
                curvature: config.curvature[i],
            });
        }
        let last = blocks.last().expect("non-empty");
        let mut logit_weights = Array1::zeros(last.planted[0].len());
        for kind in ArtifactKind::ALL {
            logit_weights.scaled_add(
                config.logit_weights[kind.index()],
                &last.planted[kind.index()],
            );
        }
        let mask = default_face_mask(STANDARD_SIDE, STANDARD_SIDE, config.feather_px)?;
        Ok(ToyEncoder {
            config,
            blocks,
            logit_weights,
            mask,
        })
    }

    pub fn config(&self) -> &ToyEncoderConfig {
        &self.config
    }

    pub fn n_layers(&self) -> usize {
        self.blocks.len()
    }

    pub fn layer_widths(&self) -> &[usize] {
        &self.config.layer_widths
    }

    /// `L1`, `L2`, ... for each block.
    pub fn layer_ids(&self) -> Vec<String> {
        (1..=self.n_layers()).map(|i| format!("L{i}")).collect()
    }

    pub fn layer_index(&self, layer_id: &str) -> Result<usize> {
        self.layer_ids()
            .iter()
            .position(|l| l == layer_id)
            .ok_or_else(|| Error::Argument(format!("toy encoder has no layer '{layer_id}'")))
    }

    pub fn planted_direction(&self, block: usize, kind: ArtifactKind) -> &Array1<f64> {
        &self.blocks[block].planted[kind.index()]
    }

    pub fn gain(&self, block: usize, kind: ArtifactKind) -> f64 {
        self.blocks[block].gains[kind.index()]
    }

    pub fn logit_weights(&self) -> &Array1<f64> {
        &self.logit_weights
    }

    pub fn logit_bias(&self) -> f64 {
        self.config.logit_bias
    }

    /// The face mask the energy estimators use for an image of this size.
    pub fn mask_for(&self, img: &Image) -> Result<RegionMask> {
        if img.width() == self.mask.width() && img.height() == self.mask.height() {
            return Ok(self.mask.clone());
        }
        let feather = self.config.feather_px * img.width() as f64 / STANDARD_SIDE as f64;
        default_face_mask(img.height(), img.width(), feather)
    }

    pub fn features(&self, img: &Image) -> Result<ImageFeatures> {
        let mask = self.mask_for(img)?;
        Ok(ImageFeatures {
            pooled: pooled_statistics(img),
            energies: artifact_energies(img, &mask),
        })
    }

    pub fn encode(&self, img: &Image, hooks: &[InterventionHook]) -> Result<EncoderOutput> {
        self.forward(&self.features(img)?, hooks)
    }

    pub fn check_hook(&self, hook: &InterventionHook) -> Result<()> {
        let Some(block) = self.blocks.get(hook.block) else {
            return Err(Error::Argument(format!(
                "hook targets block {} but the encoder has {} blocks",
                hook.block,
                self.blocks.len()
            )));
        };
        let width = block.proj_gain.len();
        let bad = match &hook.mode {
            HookMode::ZeroAblate => false,
            HookMode::MeanAblate(v) | HookMode::AddVector { v, .. } => v.len() != width,
        };
        if bad {
            return Err(Error::Argument(format!(
                "hook vector length does not match block {} width {width}",
                hook.block
            )));
        }
        Ok(())
    }

    pub fn forward(
        &self,
        features: &ImageFeatures,
        hooks: &[InterventionHook],
    ) -> Result<EncoderOutput> {
        Ok(self.run(features, hooks, None)?.0)
    }

    /// Output of one sublayer (after any hooks on it) on an otherwise clean pass.
    pub fn sublayer_output(
        &self,
        features: &ImageFeatures,
        block: usize,
        tag: Sublayer,
    ) -> Result<Array1<f64>> {
        self.check_hook(&InterventionHook::zero(block, tag))?;
        Ok(self
            .run(features, &[], Some((block, tag)))?
            .1
            .expect("target checked"))
    }

    fn run(
        &self,
        features: &ImageFeatures,
        hooks: &[InterventionHook],
        capture: Option<(usize, Sublayer)>,
    ) -> Result<(EncoderOutput, Option<Array1<f64>>)> {
        for h in hooks {
            self.check_hook(h)?;
        }
        let mut captured = None;
        let mut run_hooks = |block: usize, tag: Sublayer, out: &mut Array1<f64>| {
            for h in hooks
                .iter()
                .filter(|h| h.block == block && h.sublayer == tag)
            {
                h.apply(out);
            }
            if capture == Some((block, tag)) {
                captured = Some(out.clone());
            }
        };
        let mut layers: Vec<Array1<f64>> = Vec::with_capacity(self.blocks.len());
        for (i, block) in self.blocks.iter().enumerate() {
            let mut attn = block.mix.dot(&features.pooled);
            if let (Some(carry), Some(prev)) = (&block.carry, layers.last()) {
                attn += &carry.dot(prev);
            }
            run_hooks(i, Sublayer::Attn, &mut attn);

            let mut proj = &block.proj_gain * &attn;
            run_hooks(i, Sublayer::AttnProj, &mut proj);

            let mut mlp = Array1::zeros(proj.len());
            for kind in ArtifactKind::ALL {
                let k = kind.index();
                let e = features.energies[k];
                let response = block.gains[k] * (e + block.curvature[k] * e * e);
                if response != 0.0 {
                    mlp.scaled_add(response, &block.planted[k]);
                }
            }
            run_hooks(i, Sublayer::Mlp, &mut mlp);

            layers.push(proj + mlp);
        }
        let logit =
            self.logit_weights.dot(layers.last().expect("non-empty")) + self.config.logit_bias;
        Ok((EncoderOutput { layers, logit }, captured))
    }
}

/// 8x8 average-pooled grayscale plus per-channel means, all scaled to
/// [0, 1] and centered at 0.5.
pub fn pooled_statistics(img: &Image) -> Array1<f64> {
    let (w, h) = (img.width(), img.height());
    let mut cells = vec![(0.0, 0usize); POOL_GRID * POOL_GRID];
    let mut channels = [0.0; 3];
    for y in 0..h {
        let cy = y * POOL_GRID / h;
        for x in 0..w {
            let cx = x * POOL_GRID / w;
            let cell = &mut cells[cy * POOL_GRID + cx];
            cell.0 += img.luma(x, y);
            cell.1 += 1;
            let px = img.pixel(x, y);
            for c in 0..3 {
                channels[c] += px[c] as f64;
            }
        }
    }
    let n = (w * h) as f64;
    let mut out = Vec::with_capacity(POOLED_LEN);
    out.extend(cells.iter().map(|(s, c)| s / *c as f64 / 255.0 - 0.5));
    out.extend(channels.iter().map(|s| s / n / 255.0 - 0.5));
    Array1::from(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::apply_artifact;
    use crate::forge::synth::synth_face;

    fn encoder() -> ToyEncoder {
        ToyEncoder::new(ToyEncoderConfig {
            seed: 11,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn deterministic() {
        let enc = encoder();
        let img = synth_face(224, 3);
        let a = enc.encode(&img, &[]).unwrap();
        let b = enc.encode(&img, &[]).unwrap();
        assert_eq!(a, b);
        let again = ToyEncoder::new(enc.config().clone()).unwrap();
        assert_eq!(again.encode(&img, &[]).unwrap(), a);
    }

    #[test]
    fn planted_directions_orthonormal() {
        let enc = encoder();
        for block in 0..enc.n_layers() {
            for a in ArtifactKind::ALL {
                for b in ArtifactKind::ALL {
                    let dot = enc
                        .planted_direction(block, a)
                        .dot(enc.planted_direction(block, b));
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn ablating_final_block_leaves_bias() {
        let mut cfg = ToyEncoderConfig::default();
        cfg.logit_bias = -1.25;
        let enc = ToyEncoder::new(cfg).unwrap();
        let last = enc.n_layers() - 1;
        let hooks: Vec<_> = Sublayer::ALL
            .iter()
            .map(|&s| InterventionHook::zero(last, s))
            .collect();
        let out = enc.encode(&synth_face(224, 8), &hooks).unwrap();
        assert_eq!(out.logit, -1.25);
    }

    #[test]
    fn bad_hook_target() {
        let enc = encoder();
        let img = synth_face(64, 1);
        assert!(enc
            .encode(&img, &[InterventionHook::zero(9, Sublayer::Mlp)])
            .is_err());
        let hook = InterventionHook {
            block: 0,
            sublayer: Sublayer::Mlp,
            mode: HookMode::AddVector {
                v: Array1::zeros(3),
                alpha: 1.0,
            },
        };
        assert!(enc.encode(&img, &[hook]).is_err());
    }

    #[test]
    fn add_vector_hook_shifts_output() {
        let enc = encoder();
        let feats = enc.features(&synth_face(224, 2)).unwrap();
        let u = enc.planted_direction(0, ArtifactKind::Color).clone();
        let hook = InterventionHook {
            block: 0,
            sublayer: Sublayer::Mlp,
            mode: HookMode::AddVector {
                v: u.clone(),
                alpha: 2.0,
            },
        };
        let clean = enc.forward(&feats, &[]).unwrap();
        let steered = enc.forward(&feats, &[hook]).unwrap();
        let diff = &steered.layers[0] - &clean.layers[0];
        assert!((diff.dot(&u) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn replacing_a_sublayer_by_its_own_output_is_identity() {
        let enc = encoder();
        let feats = enc.features(&synth_face(96, 4)).unwrap();
        let clean = enc.forward(&feats, &[]).unwrap();
        for block in 0..enc.n_layers() {
            for tag in Sublayer::ALL {
                let own = enc.sublayer_output(&feats, block, tag).unwrap();
                let hook = InterventionHook {
                    block,
                    sublayer: tag,
                    mode: HookMode::MeanAblate(own),
                };
                assert_eq!(enc.forward(&feats, &[hook]).unwrap(), clean);
            }
        }
        assert!(enc
            .sublayer_output(&feats, enc.n_layers(), Sublayer::Mlp)
            .is_err());
    }

    /// Projection oracle: the blur-induced change on L4 must lie along the
    /// planted blur direction, at least 3x any other planted direction.
    #[test]
    fn blur_moves_l4_along_its_planted_direction() {
        let enc = encoder();
        for seed in 0..4 {
            let img = synth_face(224, seed);
            let mask = enc.mask_for(&img).unwrap();
            let blurred = apply_artifact(&img, ArtifactKind::Blur, 0.7, &mask, 0, 10.0).unwrap();
            let a = enc.encode(&img, &[]).unwrap();
            let b = enc.encode(&blurred, &[]).unwrap();
            let diff = &b.layers[3] - &a.layers[3];
            let along = diff.dot(enc.planted_direction(3, ArtifactKind::Blur));
            assert!(along > 0.0);
            for other in [
                ArtifactKind::Warp,
                ArtifactKind::Lighting,
                ArtifactKind::Color,
            ] {
                let off = diff.dot(enc.planted_direction(3, other)).abs();
                assert!(along >= 3.0 * off, "seed {seed}: {along} vs {other} {off}");
            }
        }
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::{to_u8, Image, RegionMask};
use crate::error::{Error, Result};
use crate::kinds::ArtifactKind;

/// Brightness gain per unit severity inside the face region.
pub const LIGHTING_GAIN: f64 = 0.6;
/// Additive RGB tint per unit severity (a warm shift).
pub const COLOR_TINT: [f64; 3] = [18.0, -6.0, -12.0];
/// Warp displacement cap per unit severity, as a fraction of image width.
pub const WARP_CAP_FRACTION: f64 = 0.06;
/// Side length of the seeded control grid the warp field is built from.
const WARP_GRID: usize = 4;
pub const DEFAULT_MAX_BLUR_RADIUS_PX: f64 = 10.0;

/// `levels` equally spaced severities from 0 to `p_max` inclusive.
///
/// Values are snapped to a 1e-12 decimal lattice so that e.g. the 8-level
/// grid up to 0.7 contains exactly the doubles `0.1, 0.2, ...`.
pub fn severity_grid(levels: usize, p_max: f64) -> Result<Vec<f64>> {
    if levels < 2 {
        return Err(Error::Argument(format!(
            "severity grid needs at least 2 levels, got {levels}"
        )));
    }
    if !(p_max > 0.0 && p_max <= 1.0) {
        return Err(Error::Argument(format!(
            "p_max must lie in (0, 1], got {p_max}"
        )));
    }
    const LATTICE: f64 = 1e12;
    let steps = (levels - 1) as f64;
    let grid: Vec<f64> = (0..levels)
        .map(|i| ((i as f64 * p_max / steps) * LATTICE).round() / LATTICE)
        .collect();
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument("severity grid step is below 1e-12".into()));
    }
    Ok(grid)
}

/// A perturbation sweep: one artifact kind over a severity grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactSpec {
    pub kind: ArtifactKind,
    pub grid: Vec<f64>,
    pub max_blur_radius_px: f64,
    pub seed: u64,
}

impl ArtifactSpec {
    pub fn new(
        kind: ArtifactKind,
        grid: Vec<f64>,
        max_blur_radius_px: f64,
        seed: u64,
    ) -> Result<Self> {
        if grid.first() != Some(&0.0) {
            return Err(Error::Argument("severity grid must start at 0.0".into()));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) || grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Argument(
                "severity grid must be strictly increasing within [0, 1]".into(),
            ));
        }
        Ok(ArtifactSpec {
            kind,
            grid,
            max_blur_radius_px,
            seed,
        })
    }

    /// The image at every level of the grid, in grid order.
    pub fn sweep(&self, img: &Image, mask: &RegionMask) -> Result<Vec<Image>> {
        self.grid
            .iter()
            .map(|&p| apply_artifact(img, self.kind, p, mask, self.seed, self.max_blur_radius_px))
            .collect()
    }
}

/// Applies one artifact at severity `p` inside the face region.
///
/// * warp: smooth seeded displacement field, at most `0.06 * width * p` px,
///   scaled by the mask weight.
/// * lighting: `in * (1 + 0.6 p)`, blended by mask weight.
/// * blur: radius `p * max_blur_radius_px`, sigma = radius / 2, as a diffusion
///   of small truncated Gaussian steps weighted by the feathered band of the
///   mask (see [`diffusion_steps`]).
/// * color: additive tint `p * (18, -6, -12)`, blended by mask weight.
///
/// `p = 0` returns the input unchanged for every kind.
pub fn apply_artifact(
    img: &Image,
    kind: ArtifactKind,
    p: f64,
    mask: &RegionMask,
    seed: u64,
    max_blur_radius_px: f64,
) -> Result<Image> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Argument(format!(
            "severity must lie in [0, 1], got {p}"
        )));
    }
    if !mask.matches(img) {
        return Err(Error::Argument(format!(
            "mask is {}x{}, image is {}x{}",
            mask.width(),
            mask.height(),
            img.width(),
            img.height()
        )));
    }
    if p == 0.0 {
        return Ok(img.clone());
    }
    Ok(match kind {
        ArtifactKind::Lighting => lighting(img, p, mask),
        ArtifactKind::Color => color(img, p, mask),
        ArtifactKind::Blur => {
            if !(max_blur_radius_px >= 0.0) {
                return Err(Error::Argument(
                    "max_blur_radius_px must be non-negative".into(),
                ));
            }
            boundary_blur(img, p * max_blur_radius_px, mask)
        }
        ArtifactKind::Warp => warp(img, p, mask, seed),
    })
}

fn lighting(img: &Image, p: f64, mask: &RegionMask) -> Image {
    let mut out = img.clone();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let w = mask.weight(x, y) as f64;
            if w == 0.0 {
                continue;
            }
            let gain = 1.0 + w * p * LIGHTING_GAIN;
            let px = img.pixel(x, y).map(|c| to_u8(c as f64 * gain));
            out.set_pixel(x, y, px);
        }
    }
    out
}

fn color(img: &Image, p: f64, mask: &RegionMask) -> Image {
    let mut out = img.clone();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let w = mask.weight(x, y) as f64;
            if w == 0.0 {
                continue;
            }
            let src = img.pixel(x, y);
            let px = [0, 1, 2].map(|c| to_u8(src[c] as f64 + w * p * COLOR_TINT[c]));
            out.set_pixel(x, y, px);
        }
    }
    out
}

/// Blend weight of the blur: a tent over the feathered band, 0 in the core
/// and outside.
#[inline]
pub fn band_weight(mask_weight: f32) -> f64 {
    if mask_weight > 0.0 && mask_weight < 1.0 {
        1.0 - (2.0 * mask_weight as f64 - 1.0).abs()
    } else {
        0.0
    }
}

/// Normalized 1-D Gaussian taps for a blur of the given radius.
pub fn gaussian_kernel(radius_px: f64) -> Vec<f64> {
    let sigma = radius_px / 2.0;
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let half = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-half..=half)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Largest sigma of one diffusion step of the boundary blur.
pub const DIFFUSION_STEP_SIGMA: f64 = 0.5;

/// Step count and per-step sigma whose composition is a Gaussian of the given
/// radius (sigma = radius / 2). Grid radii that are multiples of the step
/// give exact squares, so higher levels continue the lower ones.
pub fn diffusion_steps(radius_px: f64) -> (usize, f64) {
    let sigma = radius_px / 2.0;
    if !(sigma > 0.0) {
        return (0, 0.0);
    }
    let n = ((sigma / DIFFUSION_STEP_SIGMA).powi(2) - 1e-9)
        .ceil()
        .max(1.0) as usize;
    (n, sigma / (n as f64).sqrt())
}

/// Band-weighted diffusion: `u <- u + b * (G * u - u)` repeated
/// `diffusion_steps(radius)` times, `b = band_weight(mask)`. Where `b = 1`
/// this is a Gaussian of sigma `radius / 2`; pixels with `b = 0` never change.
fn boundary_blur(img: &Image, radius_px: f64, mask: &RegionMask) -> Image {
    let (steps, sigma) = diffusion_steps(radius_px);
    let (w, h) = (img.width(), img.height());
    let band: Vec<(usize, f64)> = mask
        .weights()
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| {
            let b = band_weight(m);
            (b > 0.0).then_some((i, b))
        })
        .collect();
    if steps == 0 || band.is_empty() {
        return img.clone();
    }
    let taps = gaussian_kernel(2.0 * sigma);
    let half = (taps.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    // rows read by the vertical pass at band pixels
    let mut need = vec![false; w * h];
    for &(i, _) in &band {
        let (x, y) = (i % w, (i / w) as isize);
        for d in -half..=half {
            need[clamp(y + d, h) * w + x] = true;
        }
    }
    let halo: Vec<usize> = (0..w * h).filter(|&i| need[i]).collect();
    let mut planes = img
        .planes()
        .map(|p| p.into_iter().map(f64::from).collect::<Vec<f64>>());
    let mut tmp = vec![0.0; w * h];
    let mut next = vec![0.0; band.len()];
    for _ in 0..steps {
        for plane in planes.iter_mut() {
            for &i in &halo {
                let (x, row) = ((i % w) as isize, i - i % w);
                tmp[i] = taps
                    .iter()
                    .enumerate()
                    .map(|(k, t)| t * plane[row + clamp(x + k as isize - half, w)])
                    .sum();
            }
            for (slot, &(i, b)) in next.iter_mut().zip(&band) {
                let (x, y) = (i % w, (i / w) as isize);
                let g: f64 = taps
                    .iter()
                    .enumerate()
                    .map(|(k, t)| t * tmp[clamp(y + k as isize - half, h) * w + x])
                    .sum();
                *slot = plane[i] + b * (g - plane[i]);
            }
            for (&v, &(i, _)) in next.iter().zip(&band) {
                plane[i] = v;
            }
        }
    }
    let mut out = img.clone();
    for &(i, _) in &band {
        out.set_pixel(i % w, i / w, [0, 1, 2].map(|c| to_u8(planes[c][i])));
    }
    out
}

/// Catmull-Rom weights for fractional offset `t` in [0, 1).
fn cubic_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// Unit-capped smooth displacement field: a seeded `4x4` grid of random
/// vectors, bicubically upsampled and rescaled so the largest vector has
/// length 1. Returned as `(dx, dy)` per pixel.
pub fn warp_field(width: usize, height: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid: Vec<(f64, f64)> = (0..WARP_GRID * WARP_GRID)
        .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let at = |gx: isize, gy: isize| {
        let cx = gx.clamp(0, WARP_GRID as isize - 1) as usize;
        let cy = gy.clamp(0, WARP_GRID as isize - 1) as usize;
        grid[cy * WARP_GRID + cx]
    };
    let span = (WARP_GRID - 1) as f64;
    let mut field = Vec::with_capacity(width * height);
    for y in 0..height {
        let fy = y as f64 / (height - 1) as f64 * span;
        let (iy, ty) = (fy.floor() as isize, fy - fy.floor());
        let wy = cubic_weights(ty);
        for x in 0..width {
            let fx = x as f64 / (width - 1) as f64 * span;
            let (ix, tx) = (fx.floor() as isize, fx - fx.floor());
            let wx = cubic_weights(tx);
            let (mut dx, mut dy) = (0.0, 0.0);
            for (j, wyj) in wy.iter().enumerate() {
                for (i, wxi) in wx.iter().enumerate() {
                    let (vx, vy) = at(ix + i as isize - 1, iy + j as isize - 1);
                    dx += wxi * wyj * vx;
                    dy += wxi * wyj * vy;
                }
            }
            field.push((dx, dy));
        }
    }
    let peak = field
        .iter()
        .map(|(dx, dy)| dx.hypot(*dy))
        .fold(0.0, f64::max);
    if peak > 0.0 {
        for v in &mut field {
            v.0 /= peak;
            v.1 /= peak;
        }
    }
    field
}

/// Largest displacement, in pixels, the warp may apply at severity `p`.
pub fn warp_cap_px(width: usize, p: f64) -> f64 {
    WARP_CAP_FRACTION * width as f64 * p
}

fn warp(img: &Image, p: f64, mask: &RegionMask, seed: u64) -> Image {
    let (w, h) = (img.width(), img.height());
    let field = warp_field(w, h, seed);
    let cap = warp_cap_px(w, p);
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let m = mask.weight(x, y) as f64;
            if m == 0.0 {
                continue;
            }
            let (fx, fy) = field[y * w + x];
            let sx = (x as f64 + m * cap * fx).clamp(0.0, (w - 1) as f64);
            let sy = (y as f64 + m * cap * fy).clamp(0.0, (h - 1) as f64);
            out.set_pixel(x, y, bilinear(img, sx, sy));
        }
    }
    out
}

fn bilinear(img: &Image, sx: f64, sy: f64) -> [u8; 3] {
    let x0 = sx.floor() as usize;
    let y0 = sy.floor() as usize;
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let tx = sx - x0 as f64;
    let ty = sy - y0 as f64;
    let (a, b, c, d) = (
        img.pixel(x0, y0),
        img.pixel(x1, y0),
        img.pixel(x0, y1),
        img.pixel(x1, y1),
    );
    [0, 1, 2].map(|k| {
        let top = a[k] as f64 * (1.0 - tx) + b[k] as f64 * tx;
        let bottom = c[k] as f64 * (1.0 - tx) + d[k] as f64 * tx;
        to_u8(top * (1.0 - ty) + bottom * ty)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::analysis::masked_laplacian_variance;
    use crate::forge::image::default_face_mask;
    use crate::forge::synth::{checkerboard, textured_image};
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};

    fn mask64() -> RegionMask {
        default_face_mask(64, 64, 6.0).unwrap()
    }

    #[test]
    fn eight_level_grid() {
        assert_eq!(
            severity_grid(8, 0.7).unwrap(),
            vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]
        );
        assert_eq!(severity_grid(2, 1.0).unwrap(), vec![0.0, 1.0]);
        assert_eq!(
            severity_grid(5, 1.0).unwrap(),
            vec![0.0, 0.25, 0.5, 0.75, 1.0]
        );
        assert!(severity_grid(1, 0.5).is_err());
        assert!(severity_grid(4, 0.0).is_err());
        assert!(severity_grid(4, 1.5).is_err());
    }

    #[test]
    fn spec_validates_grid() {
        assert!(ArtifactSpec::new(ArtifactKind::Blur, vec![0.0, 0.5], 10.0, 1).is_ok());
        assert!(ArtifactSpec::new(ArtifactKind::Blur, vec![0.1, 0.5], 10.0, 1).is_err());
        assert!(ArtifactSpec::new(ArtifactKind::Blur, vec![0.0, 0.5, 0.5], 10.0, 1).is_err());
    }

    #[test]
    fn out_of_range_severity() {
        let img = textured_image(64, 1);
        for p in [-0.1, 1.1, f64::NAN] {
            assert!(apply_artifact(&img, ArtifactKind::Color, p, &mask64(), 0, 10.0).is_err());
        }
    }

    #[test]
    fn mismatched_mask() {
        let img = textured_image(64, 1);
        let mask = default_face_mask(32, 32, 2.0).unwrap();
        assert!(apply_artifact(&img, ArtifactKind::Lighting, 0.5, &mask, 0, 10.0).is_err());
    }

    #[test]
    fn lighting_closed_form_on_gray() {
        let img = Image::filled(64, 64, [128, 128, 128]).unwrap();
        let mask = mask64();
        let out = apply_artifact(&img, ArtifactKind::Lighting, 0.5, &mask, 0, 10.0).unwrap();
        let expected = 128.0 * (1.0 + 0.5 * LIGHTING_GAIN);
        for y in 0..64 {
            for x in 0..64 {
                let w = mask.weight(x, y);
                let px = out.pixel(x, y);
                if w == 1.0 {
                    assert!((px[0] as f64 - expected).abs() <= 0.5, "{px:?}");
                } else if w == 0.0 {
                    assert_eq!(px, [128, 128, 128]);
                }
            }
        }
    }

    #[test]
    fn color_shift_direction() {
        let img = Image::filled(64, 64, [100, 100, 100]).unwrap();
        let out = apply_artifact(&img, ArtifactKind::Color, 1.0, &mask64(), 0, 10.0).unwrap();
        assert_eq!(out.pixel(32, 32), [118, 94, 88]);
        assert_eq!(out.pixel(0, 0), [100, 100, 100]);
    }

    #[test]
    fn warp_is_seeded_and_capped() {
        let img = textured_image(64, 3);
        let mask = mask64();
        let a = apply_artifact(&img, ArtifactKind::Warp, 0.7, &mask, 9, 10.0).unwrap();
        let b = apply_artifact(&img, ArtifactKind::Warp, 0.7, &mask, 9, 10.0).unwrap();
        let c = apply_artifact(&img, ArtifactKind::Warp, 0.7, &mask, 10, 10.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, img);
        let field = warp_field(64, 64, 9);
        let peak = field.iter().map(|(x, y)| x.hypot(*y)).fold(0.0, f64::max);
        assert!((peak - 1.0).abs() < 1e-12);
        assert!(warp_cap_px(64, 0.7) <= 0.06 * 64.0 * 0.7 + 1e-12);
    }

    #[test]
    fn gaussian_taps() {
        let taps = gaussian_kernel(10.0);
        // sigma 5, truncated at 15 px
        assert_eq!(taps.len(), 31);
        assert!((taps.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(gaussian_kernel(0.0), vec![1.0]);
    }

    /// Reference blur: full-image diffusion with direct 2-D convolution by the
    /// outer-product kernel.
    fn reference_blur(img: &Image, radius: f64, mask: &RegionMask) -> Image {
        let (steps, sigma) = diffusion_steps(radius);
        let taps = gaussian_kernel(2.0 * sigma);
        let half = (taps.len() / 2) as isize;
        let (w, h) = (img.width(), img.height());
        let mut u: Vec<[f64; 3]> = (0..w * h)
            .map(|i| img.pixel(i % w, i / w).map(f64::from))
            .collect();
        for _ in 0..steps {
            let prev = u.clone();
            for y in 0..h {
                for x in 0..w {
                    let bw = band_weight(mask.weight(x, y));
                    for c in 0..3 {
                        let mut acc = 0.0;
                        for (j, tj) in taps.iter().enumerate() {
                            for (i, ti) in taps.iter().enumerate() {
                                let sx = (x as isize + i as isize - half).clamp(0, w as isize - 1)
                                    as usize;
                                let sy = (y as isize + j as isize - half).clamp(0, h as isize - 1)
                                    as usize;
                                acc += ti * tj * prev[sy * w + sx][c];
                            }
                        }
                        u[y * w + x][c] = prev[y * w + x][c] + bw * (acc - prev[y * w + x][c]);
                    }
                }
            }
        }
        Image::from_fn(w, h, |x, y| u[y * w + x].map(to_u8)).unwrap()
    }

    #[test]
    fn diffusion_steps_compose_to_sigma() {
        let grid = severity_grid(8, 0.7).unwrap();
        let counts: Vec<usize> = grid.iter().map(|p| diffusion_steps(p * 10.0).0).collect();
        assert_eq!(counts, vec![0, 1, 4, 9, 16, 25, 36, 49]);
        for r in [0.3, 1.0, 2.7, 7.0, 10.0] {
            let (n, s) = diffusion_steps(r);
            assert!(s <= DIFFUSION_STEP_SIGMA + 1e-12);
            assert!((n as f64 * s * s - (r / 2.0).powi(2)).abs() < 1e-9);
        }
    }

    #[test]
    fn blur_matches_reference_convolution() {
        let img = checkerboard(64, 4);
        let mask = mask64();
        let fast = apply_artifact(&img, ArtifactKind::Blur, 0.3, &mask, 0, 10.0).unwrap();
        let slow = reference_blur(&img, 3.0, &mask);
        let worst = fast
            .as_bytes()
            .iter()
            .zip(slow.as_bytes())
            .map(|(a, b)| (*a as i32 - *b as i32).abs())
            .max()
            .unwrap();
        assert!(worst <= 1, "max deviation {worst}");
    }

    #[test]
    fn blur_reduces_boundary_detail_on_checkerboard() {
        let img = checkerboard(224, 4);
        let mask = default_face_mask(224, 224, 16.0).unwrap();
        let v = |p: f64| {
            let reference = reference_blur(&img, p * 10.0, &mask);
            masked_laplacian_variance(&reference, &mask)
        };
        assert!(v(0.7) < v(0.3));
        let fast = |p: f64| {
            let out = apply_artifact(&img, ArtifactKind::Blur, p, &mask, 0, 10.0).unwrap();
            masked_laplacian_variance(&out, &mask)
        };
        assert!(fast(0.7) < fast(0.3));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn blur_energy_non_increasing_on_noise(seed in any::<u64>(), feather in 2.0f64..8.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<u8> = (0..40 * 40 * 3).map(|_| rng.random()).collect();
            let img = Image::new(40, 40, data).unwrap();
            let mask = default_face_mask(40, 40, feather).unwrap();
            let grid = severity_grid(8, 0.7).unwrap();
            let v: Vec<f64> = grid
                .iter()
                .map(|p| masked_laplacian_variance(&apply_artifact(&img, ArtifactKind::Blur, *p, &mask, 0, 10.0).unwrap(), &mask))
                .collect();
            prop_assert!(v.windows(2).all(|w| w[1] <= w[0]), "{:?}", v);
            let out = apply_artifact(&img, ArtifactKind::Blur, 0.7, &mask, 0, 10.0).unwrap();
            for (i, m) in mask.weights().iter().enumerate() {
                if band_weight(*m) == 0.0 {
                    prop_assert_eq!(out.pixel(i % 40, i / 40), img.pixel(i % 40, i / 40));
                }
            }
        }
    }
}

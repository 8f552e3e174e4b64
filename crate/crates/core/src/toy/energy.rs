//! Closed-form artifact-energy estimators. Each reads one image against the
//! fixed face-region geometry and returns a scalar that grows with the
//! severity of one artifact kind while staying nearly flat under the others.

use crate::forge::analysis::laplacian_at;
use crate::forge::{band_weight, Image, RegionMask};
use crate::kinds::ArtifactKind;

/// Per-kind multipliers bringing each raw statistic to roughly unit range
/// at the top of the default severity grid.
pub const ENERGY_SCALE: [f64; 4] = [12.0, 2.5, 0.6, 10.0];

/// Energies indexed by [`ArtifactKind::index`].
pub type Energies = [f64; 4];

/// All four energies for `img`.
pub fn artifact_energies(img: &Image, mask: &RegionMask) -> Energies {
    let mut e = [0.0; 4];
    for kind in ArtifactKind::ALL {
        let raw = match kind {
            ArtifactKind::Warp => asymmetry(img, mask),
            ArtifactKind::Lighting => brightness_contrast(img, mask),
            ArtifactKind::Blur => laplacian_deficit(img, mask),
            ArtifactKind::Color => chroma_offset(img, mask),
        };
        e[kind.index()] = ENERGY_SCALE[kind.index()] * raw;
    }
    e
}

/// Mask-weighted mean absolute luma difference against the mirror image, in
/// units of full scale. Symmetric content scores ~0; warping breaks symmetry.
pub fn asymmetry(img: &Image, mask: &RegionMask) -> f64 {
    let w = img.width();
    let (mut acc, mut norm) = (0.0, 0.0);
    for y in 0..img.height() {
        for x in 0..w / 2 {
            let m = mask.weight(x, y) as f64;
            if m == 0.0 {
                continue;
            }
            acc += m * (img.luma(x, y) - img.luma(w - 1 - x, y)).abs();
            norm += m;
        }
    }
    if norm == 0.0 {
        0.0
    } else {
        acc / norm / 255.0
    }
}

/// Log ratio of core-region to background mean luma.
pub fn brightness_contrast(img: &Image, mask: &RegionMask) -> f64 {
    let (mut core, mut nc, mut out, mut no) = (0.0, 0usize, 0.0, 0usize);
    for y in 0..img.height() {
        for x in 0..img.width() {
            match mask.weight(x, y) {
                w if w >= 1.0 => {
                    core += img.luma(x, y);
                    nc += 1;
                }
                w if w <= 0.0 => {
                    out += img.luma(x, y);
                    no += 1;
                }
                _ => {}
            }
        }
    }
    let core = if nc > 0 { core / nc as f64 } else { 0.0 };
    let out = if no > 0 { out / no as f64 } else { 0.0 };
    ((core + 1.0) / (out + 1.0)).ln()
}

/// Log ratio of intensity-normalized Laplacian energy in the face core to
/// that in the seam band; rises as the seam loses high-frequency detail.
pub fn laplacian_deficit(img: &Image, mask: &RegionMask) -> f64 {
    let (mut core, mut band) = (Moments::default(), Moments::default());
    for y in 1..img.height() - 1 {
        for x in 1..img.width() - 1 {
            let w = mask.weight(x, y);
            let target = if w >= 1.0 {
                &mut core
            } else if band_weight(w) >= 0.5 {
                &mut band
            } else {
                continue;
            };
            target.add(laplacian_at(img, x, y), img.luma(x, y));
        }
    }
    const EPS: f64 = 1e-4;
    ((core.normalized_energy() + EPS) / (band.normalized_energy() + EPS)).ln()
}

/// Difference in mean (R - B) chromaticity between core and background.
pub fn chroma_offset(img: &Image, mask: &RegionMask) -> f64 {
    let chroma =
        |[r, g, b]: [u8; 3]| (r as f64 - b as f64) / (r as f64 + g as f64 + b as f64 + 1.0);
    let (mut core, mut nc, mut out, mut no) = (0.0, 0usize, 0.0, 0usize);
    for y in 0..img.height() {
        for x in 0..img.width() {
            match mask.weight(x, y) {
                w if w >= 1.0 => {
                    core += chroma(img.pixel(x, y));
                    nc += 1;
                }
                w if w <= 0.0 => {
                    out += chroma(img.pixel(x, y));
                    no += 1;
                }
                _ => {}
            }
        }
    }
    let core = if nc > 0 { core / nc as f64 } else { 0.0 };
    let out = if no > 0 { out / no as f64 } else { 0.0 };
    core - out
}

#[derive(Default)]
struct Moments {
    n: usize,
    lap_sq: f64,
    luma: f64,
}

impl Moments {
    fn add(&mut self, lap: f64, luma: f64) {
        self.n += 1;
        self.lap_sq += lap * lap;
        self.luma += luma;
    }

    fn normalized_energy(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let mean = self.luma / self.n as f64;
        self.lap_sq / self.n as f64 / (mean * mean + 1.0)
    }
}

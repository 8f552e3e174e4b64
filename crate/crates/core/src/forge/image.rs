use std::path::Path;

use crate::error::{Error, Result};

/// Smallest accepted side length.
pub const MIN_SIDE: usize = 8;
/// Side length images are resized to before encoding.
pub const STANDARD_SIDE: usize = 224;

/// An 8-bit RGB image, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(Error::Argument(format!(
                "image must be at least {MIN_SIDE}x{MIN_SIDE}, got {width}x{height}"
            )));
        }
        if data.len() != width * height * 3 {
            return Err(Error::Argument(format!(
                "RGB buffer has {} bytes, expected {}",
                data.len(),
                width * height * 3
            )));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width * height * 3)
            .collect();
        Image::new(width, height, data)
    }

    /// Builds an image from a per-pixel function of `(x, y)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Image::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Rec. 601 luma in [0, 255].
    #[inline]
    pub fn luma(&self, x: usize, y: usize) -> f64 {
        let [r, g, b] = self.pixel(x, y);
        0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
    }

    /// Channel planes as `f32`, each `width * height` long.
    pub fn planes(&self) -> [Vec<f32>; 3] {
        let n = self.width * self.height;
        let mut planes = [vec![0f32; n], vec![0f32; n], vec![0f32; n]];
        for (i, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                planes[c][i] = px[c] as f32;
            }
        }
        planes
    }

    pub fn load_png(path: &Path, side: usize) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let img = if img.width() as usize != side || img.height() as usize != side {
            image::imageops::resize(
                &img,
                side as u32,
                side as u32,
                image::imageops::FilterType::Triangle,
            )
        } else {
            img
        };
        Image::new(side, side, img.into_raw())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf =
            image::RgbImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
                .expect("buffer length checked at construction");
        buf.save(path)?;
        Ok(())
    }
}

/// Saturating conversion of a channel value.
#[inline]
pub(crate) fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Per-pixel weights in [0, 1] marking the face region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    width: usize,
    height: usize,
    weights: Vec<f32>,
}

impl RegionMask {
    pub fn new(width: usize, height: usize, weights: Vec<f32>) -> Result<Self> {
        if weights.len() != width * height {
            return Err(Error::Argument(
                "mask size does not match dimensions".into(),
            ));
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::Argument("mask weights must lie in [0, 1]".into()));
        }
        Ok(RegionMask {
            width,
            height,
            weights,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn weight(&self, x: usize, y: usize) -> f32 {
        self.weights[y * self.width + x]
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn matches(&self, img: &Image) -> bool {
        self.width == img.width() && self.height == img.height()
    }
}

/// Centered elliptical face region with semi-axes `0.35 * width` and
/// `0.45 * height`, weight 1 inside and falling linearly to 0 over
/// `feather_px` pixels outside the ellipse.
pub fn default_face_mask(height: usize, width: usize, feather_px: f64) -> Result<RegionMask> {
    if width < MIN_SIDE || height < MIN_SIDE {
        return Err(Error::Argument(format!(
            "mask must be at least {MIN_SIDE}x{MIN_SIDE}, got {width}x{height}"
        )));
    }
    if !(feather_px >= 0.0) {
        return Err(Error::Argument("feather_px must be non-negative".into()));
    }
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let a = 0.35 * width as f64;
    let b = 0.45 * height as f64;
    let mut weights = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let rho = ((dx / a).powi(2) + (dy / b).powi(2)).sqrt();
            let w = if rho <= 1.0 {
                1.0
            } else if feather_px == 0.0 {
                0.0
            } else {
                // distance past the boundary measured along the ray from the center
                let outside = (rho - 1.0) * dx.hypot(dy) / rho;
                (1.0 - outside / feather_px).clamp(0.0, 1.0)
            };
            weights.push(w as f32);
        }
    }
    RegionMask::new(width, height, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_center_and_corner() {
        let m = default_face_mask(224, 224, 16.0).unwrap();
        assert_eq!(m.weight(112, 112), 1.0);
        assert_eq!(m.weight(0, 0), 0.0);
        assert_eq!(m.weight(223, 223), 0.0);
        assert!(m.weights().iter().any(|&w| w > 0.0 && w < 1.0));
    }

    #[test]
    fn zero_feather_is_binary() {
        let m = default_face_mask(64, 48, 0.0).unwrap();
        assert!(m.weights().iter().all(|&w| w == 0.0 || w == 1.0));
        assert_eq!(m.weight(24, 32), 1.0);
    }

    #[test]
    fn mask_respects_axes() {
        let m = default_face_mask(100, 100, 0.0).unwrap();
        // horizontal semi-axis 35 px, vertical 45 px
        assert_eq!(m.weight(49 + 34, 49), 1.0);
        assert_eq!(m.weight(49 + 37, 49), 0.0);
        assert_eq!(m.weight(49, 49 + 44), 1.0);
        assert_eq!(m.weight(49, 49 + 47), 0.0);
    }

    #[test]
    fn rejects_tiny_images() {
        assert!(default_face_mask(7, 64, 1.0).is_err());
        assert!(Image::filled(4, 4, [0, 0, 0]).is_err());
        assert!(Image::new(8, 8, vec![0; 10]).is_err());
    }
}

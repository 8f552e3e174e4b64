use super::image::{Image, RegionMask};

/// 4-neighbour Laplacian of luma at interior pixel `(x, y)`.
#[inline]
pub fn laplacian_at(img: &Image, x: usize, y: usize) -> f64 {
    img.luma(x - 1, y) + img.luma(x + 1, y) + img.luma(x, y - 1) + img.luma(x, y + 1)
        - 4.0 * img.luma(x, y)
}

/// Variance of the luma Laplacian over interior pixels selected by `keep`.
/// Returns 0 when fewer than two pixels are selected.
pub fn laplacian_variance_where(img: &Image, mask: &RegionMask, keep: impl Fn(f32) -> bool) -> f64 {
    let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
    for y in 1..img.height() - 1 {
        for x in 1..img.width() - 1 {
            if keep(mask.weight(x, y)) {
                let l = laplacian_at(img, x, y);
                n += 1;
                sum += l;
                sq += l * l;
            }
        }
    }
    if n < 2 {
        return 0.0;
    }
    let mean = sum / n as f64;
    (sq / n as f64 - mean * mean).max(0.0)
}

/// High-frequency energy of the masked region (mask weight > 0).
pub fn masked_laplacian_variance(img: &Image, mask: &RegionMask) -> f64 {
    laplacian_variance_where(img, mask, |w| w > 0.0)
}

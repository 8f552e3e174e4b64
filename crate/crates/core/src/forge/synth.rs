//! Deterministic procedural test imagery: left-right symmetric synthetic
//! faces and generic textures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::{to_u8, Image};

/// Stateless hash noise in [-1, 1].
fn hash_noise(seed: u64, x: usize, y: usize) -> f64 {
    let mut z = seed
        ^ (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn smoothstep(edge0: f64, edge1: f64, v: f64) -> f64 {
    let t = ((v - edge0) / (edge1 - edge0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// A synthetic frontal face: skin-toned ellipse with eyes, brows, nose shading
/// and mouth over a gradient background. Content is mirror-symmetric about the
/// vertical axis apart from faint sensor noise.
pub fn synth_face(side: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = side as f64;
    let skin = [
        rng.random_range(170.0..215.0),
        rng.random_range(125.0..160.0),
        rng.random_range(95.0..130.0),
    ];
    let bg_top = [
        rng.random_range(40.0..200.0),
        rng.random_range(40.0..200.0),
        rng.random_range(40.0..200.0),
    ];
    let bg_bottom = bg_top.map(|c: f64| (c + rng.random_range(-40.0..40.0)).clamp(20.0, 230.0));
    let face_a = rng.random_range(0.31..0.36) * s;
    let face_b = rng.random_range(0.41..0.46) * s;
    let eye_dx = rng.random_range(0.11..0.15) * s;
    let eye_dy = rng.random_range(0.06..0.10) * s;
    let eye_r = rng.random_range(0.030..0.045) * s;
    let mouth_dy = rng.random_range(0.18..0.23) * s;
    let mouth_w = rng.random_range(0.08..0.12) * s;
    let skin_grain = rng.random_range(7.0..13.0);
    let pore_freq = rng.random_range(0.35..0.6);
    let texture_seed: u64 = rng.random();
    let sensor_seed: u64 = rng.random();

    let c = (s - 1.0) / 2.0;
    Image::from_fn(side, side, |x, y| {
        let xs = x.min(side - 1 - x);
        let dx = x as f64 - c;
        let dy = y as f64 - c;
        let t = y as f64 / (s - 1.0);
        let mut px = [0, 1, 2].map(|k| bg_top[k] * (1.0 - t) + bg_bottom[k] * t);
        let bg_grain = 6.0 * hash_noise(texture_seed ^ 0xB6, xs, y);
        px.iter_mut().for_each(|v| *v += bg_grain);

        let rho = ((dx / face_a).powi(2) + (dy / face_b).powi(2)).sqrt();
        let inside = 1.0 - smoothstep(0.97, 1.03, rho);
        if inside > 0.0 {
            let shade = 1.0 - 0.18 * (dy / face_b).powi(2) - 0.12 * (dx / face_a).powi(2);
            let pores = 0.5 * (1.0 + (pore_freq * xs as f64).sin() * (pore_freq * y as f64).cos());
            let grain = skin_grain * (hash_noise(texture_seed, xs, y) + 0.4 * pores);
            let mut f = skin.map(|v| v * shade + grain);

            let eye = ((dx.abs() - eye_dx).powi(2) / (eye_r * 1.6).powi(2)
                + (dy + eye_dy).powi(2) / eye_r.powi(2))
            .sqrt();
            let e = 1.0 - smoothstep(0.85, 1.0, eye);
            let pupil = 1.0 - smoothstep(0.3, 0.45, eye);
            for (k, v) in f.iter_mut().enumerate() {
                let white = [235.0, 235.0, 230.0][k];
                *v = *v * (1.0 - e) + white * e;
                *v = *v * (1.0 - pupil) + 35.0 * pupil;
            }

            let brow = ((dx.abs() - eye_dx) / (eye_r * 2.0)).powi(2)
                + ((dy + eye_dy + 2.0 * eye_r) / (eye_r * 0.4)).powi(2);
            let b = 1.0 - smoothstep(0.8, 1.0, brow.sqrt());
            f.iter_mut().for_each(|v| *v *= 1.0 - 0.55 * b);

            let nose = (dx / (0.03 * s)).powi(2) + ((dy - 0.05 * s) / (0.09 * s)).powi(2);
            let n = 1.0 - smoothstep(0.6, 1.0, nose.sqrt());
            f.iter_mut()
                .for_each(|v| *v *= 1.0 - 0.10 * n * (dx.abs() / (0.03 * s)).min(1.0));

            let mouth = ((dx / mouth_w).powi(2) + ((dy - mouth_dy) / (0.025 * s)).powi(2)).sqrt();
            let m = 1.0 - smoothstep(0.8, 1.0, mouth);
            let lips = [170.0, 70.0, 75.0];
            for (k, v) in f.iter_mut().enumerate() {
                *v = *v * (1.0 - m) + lips[k] * m;
            }

            for k in 0..3 {
                px[k] = px[k] * (1.0 - inside) + f[k] * inside;
            }
        }
        let sensor = 1.5 * hash_noise(sensor_seed, x, y);
        px.map(|v| to_u8(v + sensor))
    })
    .expect("side validated by caller")
}

/// Black/white checkerboard with square cells of `period` pixels.
pub fn checkerboard(side: usize, period: usize) -> Image {
    Image::from_fn(side, side, |x, y| {
        if (x / period + y / period).is_multiple_of(2) {
            [40, 40, 40]
        } else {
            [215, 215, 215]
        }
    })
    .expect("valid size")
}

/// Seeded texture mixing hash noise, oriented stripes and a checker term, so
/// every seed has non-constant high-frequency content everywhere.
pub fn textured_image(side: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = [
        rng.random_range(60.0..190.0),
        rng.random_range(60.0..190.0),
        rng.random_range(60.0..190.0),
    ];
    let noise_amp = rng.random_range(10.0..40.0);
    let stripe_amp = rng.random_range(5.0..35.0);
    let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let freq = rng.random_range(0.2..1.2);
    let period = rng.random_range(2..9usize);
    let noise_seed: u64 = rng.random();
    Image::from_fn(side, side, |x, y| {
        let u = x as f64 * angle.cos() + y as f64 * angle.sin();
        let stripes = stripe_amp * (freq * u).sin();
        let check = if (x / period + y / period) % 2 == 0 {
            10.0
        } else {
            -10.0
        };
        [0, 1, 2].map(|k| {
            let n = noise_amp * hash_noise(noise_seed.wrapping_add(k as u64), x, y);
            to_u8(base[k] + n + stripes + check)
        })
    })
    .expect("valid size")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn faces_are_deterministic_and_distinct() {
        assert_eq!(synth_face(64, 1), synth_face(64, 1));
        assert_ne!(synth_face(64, 1), synth_face(64, 2));
    }

    #[test]
    fn faces_are_nearly_symmetric() {
        let img = synth_face(224, 5);
        let mut worst = 0i32;
        for y in 0..224 {
            for x in 0..112 {
                let a = img.pixel(x, y);
                let b = img.pixel(223 - x, y);
                for k in 0..3 {
                    worst = worst.max((a[k] as i32 - b[k] as i32).abs());
                }
            }
        }
        // only the sensor noise breaks symmetry
        assert!(worst <= 4, "asymmetry {worst}");
    }
}

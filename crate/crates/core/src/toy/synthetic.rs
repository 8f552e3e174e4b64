use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::store::ActivationSet;

/// Standard deviation of the additive Gaussian noise.
pub const NOISE_SIGMA: f64 = 0.01;
/// Active coefficients are drawn uniformly from this range.
pub const COEFFICIENT_RANGE: (f64, f64) = (1.0, 3.0);

/// Data with a known sparse factorization `data = coefficients . dictionary + noise`.
#[derive(Debug, Clone)]
pub struct SyntheticCodes {
    /// N x D observations.
    pub data: Array2<f64>,
    /// d x D, unit-norm rows.
    pub dictionary: Array2<f64>,
    /// N x d, non-negative, exactly `k_active` non-zeros per row.
    pub coefficients: Array2<f64>,
}

impl SyntheticCodes {
    pub fn to_activation_set(&self, layer_id: &str) -> Result<ActivationSet> {
        ActivationSet::new(layer_id, self.data.mapv(|v| v as f32))
    }
}

/// Draws `n` rows in `input_dim` dimensions, each a non-negative combination
/// of `k_active` out of `latent_dim` random unit atoms plus N(0, 0.01^2) noise.
pub fn generate_synthetic_codes(
    n: usize,
    input_dim: usize,
    latent_dim: usize,
    k_active: usize,
    seed: u64,
) -> Result<SyntheticCodes> {
    if n == 0 || input_dim == 0 || latent_dim == 0 {
        return Err(Error::Argument("n, D and d must be positive".into()));
    }
    if k_active > latent_dim || latent_dim > input_dim {
        return Err(Error::Argument(format!(
            "need k_active <= d <= D, got k={k_active}, d={latent_dim}, D={input_dim}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dictionary = Array2::<f64>::zeros((latent_dim, input_dim));
    for mut atom in dictionary.rows_mut() {
        let v: Array1<f64> =
            Array1::from_shape_simple_fn(input_dim, || StandardNormal.sample(&mut rng));
        let norm = v.dot(&v).sqrt();
        atom.assign(&(v / norm));
    }
    let mut coefficients = Array2::<f64>::zeros((n, latent_dim));
    for mut row in coefficients.rows_mut() {
        for j in sample(&mut rng, latent_dim, k_active) {
            row[j] = rng.random_range(COEFFICIENT_RANGE.0..COEFFICIENT_RANGE.1);
        }
    }
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");
    let mut data = coefficients.dot(&dictionary);
    data.mapv_inplace(|v| v + noise.sample(&mut rng));
    Ok(SyntheticCodes {
        data,
        dictionary,
        coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_noise_row() {
        let s = generate_synthetic_codes(1, 16, 4, 0, 1).unwrap();
        assert!(s.coefficients.iter().all(|&c| c == 0.0));
        assert!(s.data.iter().all(|v| v.abs() < 0.06));
    }

    #[test]
    fn dense_codes() {
        let s = generate_synthetic_codes(20, 16, 4, 4, 1).unwrap();
        assert!(s.coefficients.iter().all(|&c| c > 0.0));
    }

    #[test]
    fn exact_sparsity_and_unit_atoms() {
        let s = generate_synthetic_codes(200, 64, 16, 3, 5).unwrap();
        for row in s.coefficients.rows() {
            assert_eq!(row.iter().filter(|&&c| c != 0.0).count(), 3);
        }
        for atom in s.dictionary.rows() {
            assert!((atom.dot(&atom) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn argument_checks() {
        assert!(generate_synthetic_codes(10, 8, 16, 2, 0).is_err());
        assert!(generate_synthetic_codes(10, 32, 4, 5, 0).is_err());
        assert!(generate_synthetic_codes(0, 32, 4, 1, 0).is_err());
    }
}

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Largest latent width regardless of input width.
pub const MAX_LATENT: usize = 16_384;
/// Smallest input width `init` accepts.
pub const MIN_INPUT: usize = 8;

/// Latent width for an input of width `d`: one eighth, capped at 16384.
pub fn latent_width_for(input_width: usize) -> usize {
    (input_width / 8).min(MAX_LATENT)
}

/// Under-complete autoencoder with an affine encoder and affine decoder:
/// `f(x) = W_enc x + b_enc`, `g(h) = W_dec h + b_dec`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAutoencoder {
    pub(crate) w_enc: Array2<f64>,
    pub(crate) b_enc: Array1<f64>,
    pub(crate) w_dec: Array2<f64>,
    pub(crate) b_dec: Array1<f64>,
}

impl SparseAutoencoder {
    /// Fresh autoencoder for `input_width`-dimensional activations. Encoder
    /// weights are uniform in ±1/sqrt(D), decoder weights in ±1/sqrt(d),
    /// biases zero.
    pub fn init(input_width: usize, seed: u64) -> Result<Self> {
        if input_width < MIN_INPUT {
            return Err(Error::Argument(format!(
                "input width must be at least {MIN_INPUT}, got {input_width}"
            )));
        }
        let d = latent_width_for(input_width);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc_bound = 1.0 / (input_width as f64).sqrt();
        let dec_bound = 1.0 / (d as f64).sqrt();
        let w_enc = Array2::from_shape_simple_fn((d, input_width), || {
            rng.random_range(-enc_bound..enc_bound)
        });
        let w_dec = Array2::from_shape_simple_fn((input_width, d), || {
            rng.random_range(-dec_bound..dec_bound)
        });
        Ok(SparseAutoencoder {
            w_enc,
            b_enc: Array1::zeros(d),
            w_dec,
            b_dec: Array1::zeros(input_width),
        })
    }

    /// Assembles an autoencoder from explicit parameters (`d <= D`).
    pub fn from_parts(
        w_enc: Array2<f64>,
        b_enc: Array1<f64>,
        w_dec: Array2<f64>,
        b_dec: Array1<f64>,
    ) -> Result<Self> {
        let (d, input) = w_enc.dim();
        if d == 0 || d > input {
            return Err(Error::Argument(format!(
                "latent width {d} must be in 1..={input}"
            )));
        }
        if b_enc.len() != d || w_dec.dim() != (input, d) || b_dec.len() != input {
            return Err(Error::Argument(format!(
                "inconsistent shapes: W_enc {:?}, b_enc {}, W_dec {:?}, b_dec {}",
                w_enc.dim(),
                b_enc.len(),
                w_dec.dim(),
                b_dec.len()
            )));
        }
        let sae = SparseAutoencoder {
            w_enc,
            b_enc,
            w_dec,
            b_dec,
        };
        if !sae.is_finite() {
            return Err(Error::Data("autoencoder weights must be finite".into()));
        }
        Ok(sae)
    }

    pub fn input_width(&self) -> usize {
        self.w_enc.ncols()
    }

    pub fn latent_width(&self) -> usize {
        self.w_enc.nrows()
    }

    pub fn w_enc(&self) -> &Array2<f64> {
        &self.w_enc
    }

    pub fn b_enc(&self) -> &Array1<f64> {
        &self.b_enc
    }

    pub fn w_dec(&self) -> &Array2<f64> {
        &self.w_dec
    }

    pub fn b_dec(&self) -> &Array1<f64> {
        &self.b_dec
    }

    pub fn is_finite(&self) -> bool {
        [&self.b_enc, &self.b_dec]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
            && [&self.w_enc, &self.w_dec]
                .iter()
                .all(|m| m.iter().all(|x| x.is_finite()))
    }

    pub fn encode(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if x.len() != self.input_width() {
            return Err(Error::Argument(format!(
                "input has length {}, autoencoder expects {}",
                x.len(),
                self.input_width()
            )));
        }
        Ok(self.w_enc.dot(&x) + &self.b_enc)
    }

    pub fn decode(&self, h: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if h.len() != self.latent_width() {
            return Err(Error::Argument(format!(
                "code has length {}, autoencoder expects {}",
                h.len(),
                self.latent_width()
            )));
        }
        Ok(self.w_dec.dot(&h) + &self.b_dec)
    }

    /// Row-wise encoding of an N x D batch.
    pub fn encode_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_width() {
            return Err(Error::Argument(format!(
                "batch has {} columns, autoencoder expects {}",
                x.ncols(),
                self.input_width()
            )));
        }
        Ok(x.dot(&self.w_enc.t()) + self.b_enc.view().insert_axis(Axis(0)))
    }

    pub fn decode_batch(&self, h: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if h.ncols() != self.latent_width() {
            return Err(Error::Argument(format!(
                "codes have {} columns, autoencoder expects {}",
                h.ncols(),
                self.latent_width()
            )));
        }
        Ok(h.dot(&self.w_dec.t()) + self.b_dec.view().insert_axis(Axis(0)))
    }

    /// Reconstruct `x` through the bottleneck.
    pub fn reconstruct_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let h = self.encode_batch(x)?;
        self.decode_batch(h.view())
    }

    /// Round every parameter through `f32`, as persisted on disk.
    pub fn rounded_to_f32(&self) -> Self {
        let r = |v: f64| v as f32 as f64;
        SparseAutoencoder {
            w_enc: self.w_enc.mapv(r),
            b_enc: self.b_enc.mapv(r),
            w_dec: self.w_dec.mapv(r),
            b_dec: self.b_dec.mapv(r),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn latent_width_rule() {
        assert_eq!(latent_width_for(1536), 192);
        assert_eq!(latent_width_for(200_000), 16_384);
        assert_eq!(latent_width_for(8), 1);
        assert_eq!(
            SparseAutoencoder::init(1536, 0).unwrap().latent_width(),
            192
        );
        assert!(SparseAutoencoder::init(7, 0).is_err());
    }

    #[test]
    fn init_bounds_and_zero_biases() {
        let sae = SparseAutoencoder::init(64, 3).unwrap();
        assert!(sae.w_enc.iter().all(|w| w.abs() <= 1.0 / 8.0));
        assert!(sae.w_dec.iter().all(|w| w.abs() <= 1.0 / 8f64.sqrt()));
        assert!(sae.b_enc.iter().chain(sae.b_dec.iter()).all(|&b| b == 0.0));
        assert_eq!(sae, SparseAutoencoder::init(64, 3).unwrap());
    }

    #[test]
    fn zero_weights_encode_to_zero() {
        let sae = SparseAutoencoder::from_parts(
            Array2::zeros((2, 4)),
            Array1::zeros(2),
            Array2::zeros((4, 2)),
            Array1::zeros(4),
        )
        .unwrap();
        let h = sae.encode(array![1.0, -2.0, 3.0, 4.0].view()).unwrap();
        assert_eq!(h, array![0.0, 0.0]);
    }

    #[test]
    fn identity_encoder() {
        let sae = SparseAutoencoder::from_parts(
            Array2::eye(3),
            Array1::zeros(3),
            Array2::eye(3),
            Array1::zeros(3),
        )
        .unwrap();
        let x = array![0.5, -1.5, 2.0];
        assert_eq!(sae.encode(x.view()).unwrap(), x);
    }

    #[test]
    fn hand_computed_three_to_two() {
        // W_enc = [[1, 2, 0], [-1, 0, 3]], b_enc = [0.5, -1]
        // x = [2, -1, 1]: h = [1*2 + 2*(-1) + 0 + 0.5, -2 + 0 + 3 - 1] = [0.5, 0]
        // W_dec = [[1, 0], [0, 2], [1, 1]], b_dec = [0, 1, -1]
        // decode([0.5, 0]) = [0.5, 1, -0.5]
        let sae = SparseAutoencoder::from_parts(
            array![[1.0, 2.0, 0.0], [-1.0, 0.0, 3.0]],
            array![0.5, -1.0],
            array![[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]],
            array![0.0, 1.0, -1.0],
        )
        .unwrap();
        let h = sae.encode(array![2.0, -1.0, 1.0].view()).unwrap();
        assert_eq!(h, array![0.5, 0.0]);
        assert_eq!(sae.decode(h.view()).unwrap(), array![0.5, 1.0, -0.5]);
        let batch = sae.encode_batch(array![[2.0, -1.0, 1.0]].view()).unwrap();
        assert_eq!(batch.row(0), h);
    }

    #[test]
    fn shape_errors() {
        let sae = SparseAutoencoder::init(16, 0).unwrap();
        assert!(sae.encode(array![1.0].view()).is_err());
        assert!(sae.decode(array![1.0, 2.0, 3.0].view()).is_err());
        assert!(SparseAutoencoder::from_parts(
            Array2::zeros((5, 4)),
            Array1::zeros(5),
            Array2::zeros((4, 5)),
            Array1::zeros(4),
        )
        .is_err());
    }
}

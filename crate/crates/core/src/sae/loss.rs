//! The autoencoder objective: mean squared reconstruction error plus
//! `lambda` times the mean L1 norm of the latent code, with analytic
//! gradients.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::model::SparseAutoencoder;
use crate::error::{Error, Result};
use crate::exec::Execution;

/// Rows per gradient work unit. Partial sums are reduced in chunk order,
/// so results do not depend on the execution mode.
pub const GRAD_CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub recon: f64,
    pub penalty: f64,
}

impl LossParts {
    fn from_sums(recon_sum: f64, l1_sum: f64, rows: usize, lambda: f64) -> Self {
        let recon = recon_sum / rows as f64;
        let penalty = lambda * (l1_sum / rows as f64);
        LossParts {
            total: recon + penalty,
            recon,
            penalty,
        }
    }
}

/// Gradients with the same shapes as the autoencoder parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w_enc: Array2<f64>,
    pub b_enc: Array1<f64>,
    pub w_dec: Array2<f64>,
    pub b_dec: Array1<f64>,
}

impl Gradients {
    fn zeros_like(sae: &SparseAutoencoder) -> Self {
        Gradients {
            w_enc: Array2::zeros(sae.w_enc.raw_dim()),
            b_enc: Array1::zeros(sae.b_enc.raw_dim()),
            w_dec: Array2::zeros(sae.w_dec.raw_dim()),
            b_dec: Array1::zeros(sae.b_dec.raw_dim()),
        }
    }

    fn add_assign(&mut self, other: &Gradients) {
        self.w_enc += &other.w_enc;
        self.b_enc += &other.b_enc;
        self.w_dec += &other.w_dec;
        self.b_dec += &other.b_dec;
    }

    fn scale(&mut self, k: f64) {
        self.w_enc *= k;
        self.b_enc *= k;
        self.w_dec *= k;
        self.b_dec *= k;
    }
}

fn check_batch(sae: &SparseAutoencoder, batch: &ArrayView2<'_, f64>) -> Result<()> {
    if batch.nrows() == 0 {
        return Err(Error::Argument("loss needs a non-empty batch".into()));
    }
    if batch.ncols() != sae.input_width() {
        return Err(Error::Argument(format!(
            "batch has {} columns, autoencoder expects {}",
            batch.ncols(),
            sae.input_width()
        )));
    }
    Ok(())
}

/// Loss only.
pub fn sae_loss(
    sae: &SparseAutoencoder,
    batch: ArrayView2<'_, f64>,
    lambda: f64,
) -> Result<LossParts> {
    check_batch(sae, &batch)?;
    let h = sae.encode_batch(batch)?;
    let recon = sae.decode_batch(h.view())?;
    let recon_sum: f64 = (&recon - &batch).iter().map(|r| r * r).sum();
    let l1_sum: f64 = h.iter().map(|v| v.abs()).sum();
    Ok(LossParts::from_sums(
        recon_sum,
        l1_sum,
        batch.nrows(),
        lambda,
    ))
}

struct Partial {
    recon_sum: f64,
    l1_sum: f64,
    grads: Gradients,
}

fn chunk_partial(sae: &SparseAutoencoder, x: ArrayView2<'_, f64>, lambda: f64) -> Partial {
    let h = x.dot(&sae.w_enc.t()) + sae.b_enc.view().insert_axis(Axis(0));
    let out = h.dot(&sae.w_dec.t()) + sae.b_dec.view().insert_axis(Axis(0));
    let residual = &out - &x;
    let recon_sum = residual.iter().map(|r| r * r).sum();
    let l1_sum = h.iter().map(|v| v.abs()).sum();

    let d_out = residual * 2.0;
    let w_dec = d_out.t().dot(&h);
    let b_dec = d_out.sum_axis(Axis(0));
    // subgradient of |h| taken as 0 at h = 0
    let sign = h.mapv(|v| {
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    });
    let d_h = d_out.dot(&sae.w_dec) + sign * lambda;
    let w_enc = d_h.t().dot(&x);
    let b_enc = d_h.sum_axis(Axis(0));
    Partial {
        recon_sum,
        l1_sum,
        grads: Gradients {
            w_enc,
            b_enc,
            w_dec,
            b_dec,
        },
    }
}

/// Loss and its gradient with respect to every parameter, averaged over the
/// batch rows.
pub fn loss_and_gradients(
    sae: &SparseAutoencoder,
    batch: ArrayView2<'_, f64>,
    lambda: f64,
    exec: Execution,
) -> Result<(LossParts, Gradients)> {
    check_batch(sae, &batch)?;
    let rows = batch.nrows();
    let starts: Vec<usize> = (0..rows).step_by(GRAD_CHUNK).collect();
    let partials = exec.map(&starts, |&start| {
        let end = (start + GRAD_CHUNK).min(rows);
        chunk_partial(sae, batch.slice(s![start..end, ..]), lambda)
    });
    let mut grads = Gradients::zeros_like(sae);
    let (mut recon_sum, mut l1_sum) = (0.0, 0.0);
    for p in &partials {
        recon_sum += p.recon_sum;
        l1_sum += p.l1_sum;
        grads.add_assign(&p.grads);
    }
    grads.scale(1.0 / rows as f64);
    Ok((LossParts::from_sums(recon_sum, l1_sum, rows, lambda), grads))
}

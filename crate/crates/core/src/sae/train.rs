use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::loss::{loss_and_gradients, sae_loss};
use super::metrics::{per_sample_activity, LatentCodes};
use super::model::SparseAutoencoder;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::store::ActivationSet;

/// Fewest rows `train_sae` accepts.
pub const MIN_TRAIN_ROWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub val_fraction: f64,
    pub eps_active: f64,
    /// Standardize columns before training; the fitted shift and scale are
    /// folded back into the weights afterwards.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1e-3,
            lr: 1e-4,
            max_epochs: 10,
            patience: 3,
            batch_size: 64,
            val_fraction: 0.1,
            eps_active: 1e-4,
            standardize: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("sae config: {m}")));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.max_epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return bad("max_epochs, patience and batch_size must be positive");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must lie in (0, 1)");
        }
        if !(self.eps_active > 0.0) {
            return bad("eps_active must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total_loss: f64,
    pub recon_loss: f64,
    pub sparsity_penalty: f64,
    pub val_loss: f64,
    pub mean_activity_ratio: f64,
}

/// Per-epoch diagnostics of one training run. Losses are full-pass
/// evaluations on the training split after each epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub initial_total_loss: f64,
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose weights were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops once the monitored loss has failed to improve for `patience`
/// consecutive observations.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            return StopDecision::Improved;
        }
        self.since_best += 1;
        if self.since_best >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// Seeded train/validation row split; validation takes
/// `round(n * val_fraction)` rows, at least one, leaving at least one.
pub fn split_rows(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
    let val = idx[..n_val].to_vec();
    let train = idx[n_val..].to_vec();
    (train, val)
}

struct Standardizer {
    mean: Array1<f64>,
    scale: Array1<f64>,
}

impl Standardizer {
    fn fit(x: &Array2<f64>) -> Self {
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let scale = x
            .std_axis(Axis(0), 0.0)
            .mapv(|s| if s > 1e-12 { s } else { 1.0 });
        Standardizer { mean, scale }
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.mean.view().insert_axis(Axis(0))) / self.scale.view().insert_axis(Axis(0))
    }

    /// Rewrites `sae` (trained on standardized inputs) to act on raw inputs.
    fn fold(&self, sae: &SparseAutoencoder) -> SparseAutoencoder {
        let w_enc = &sae.w_enc / &self.scale.view().insert_axis(Axis(0));
        let b_enc = &sae.b_enc - &w_enc.dot(&self.mean);
        let w_dec = &sae.w_dec * &self.scale.view().insert_axis(Axis(1));
        let b_dec = &sae.b_dec * &self.scale + &self.mean;
        SparseAutoencoder {
            w_enc,
            b_enc,
            w_dec,
            b_dec,
        }
    }
}

fn evaluate(
    sae: &SparseAutoencoder,
    x: ArrayView2<'_, f64>,
    config: &TrainConfig,
) -> Result<(super::loss::LossParts, f64)> {
    let loss = sae_loss(sae, x, config.lambda)?;
    let codes = LatentCodes::new(sae.encode_batch(x)?)?;
    let activity = per_sample_activity(&codes, config.eps_active);
    Ok((loss, activity.mean_activity_ratio))
}

/// Trains with minibatch Adam and early stopping on validation loss,
/// returning the weights of the best validation epoch.
pub fn train_sae(
    sae: SparseAutoencoder,
    train: &ActivationSet,
    config: &TrainConfig,
    exec: Execution,
) -> Result<(SparseAutoencoder, TrainingTrace)> {
    config.validate()?;
    let n = train.n_samples();
    if n < MIN_TRAIN_ROWS {
        return Err(Error::Data(format!(
            "autoencoder training needs at least {MIN_TRAIN_ROWS} rows, got {n}"
        )));
    }
    if train.width() != sae.input_width() {
        return Err(Error::Argument(format!(
            "activations have width {}, autoencoder expects {}",
            train.width(),
            sae.input_width()
        )));
    }
    let all = train.to_f64();
    let (train_idx, val_idx) = split_rows(n, config.val_fraction, config.seed);
    let mut x_train = all.select(Axis(0), &train_idx);
    let mut x_val = all.select(Axis(0), &val_idx);
    let standardizer = config.standardize.then(|| Standardizer::fit(&x_train));
    if let Some(s) = &standardizer {
        x_train = s.apply(&x_train);
        x_val = s.apply(&x_val);
    }

    let mut sae = sae;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut opt = Adam::new(
        config.lr,
        &[
            sae.w_enc.len(),
            sae.b_enc.len(),
            sae.w_dec.len(),
            sae.b_dec.len(),
        ],
    );
    let (initial, _) = evaluate(&sae, x_train.view(), config)?;
    let initial_val = sae_loss(&sae, x_val.view(), config.lambda)?.total;

    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = sae.clone();
    let mut epochs = Vec::new();
    let mut order: Vec<usize> = (0..x_train.nrows()).collect();
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for batch_idx in order.chunks(config.batch_size) {
            let batch = x_train.select(Axis(0), batch_idx);
            let (_, g) = loss_and_gradients(&sae, batch.view(), config.lambda, exec)?;
            let mut params = [
                sae.w_enc.as_slice_mut().expect("standard layout"),
                sae.b_enc.as_slice_mut().expect("standard layout"),
                sae.w_dec.as_slice_mut().expect("standard layout"),
                sae.b_dec.as_slice_mut().expect("standard layout"),
            ];
            let grads = [
                g.w_enc.as_slice().expect("standard layout"),
                g.b_enc.as_slice().expect("standard layout"),
                g.w_dec.as_slice().expect("standard layout"),
                g.b_dec.as_slice().expect("standard layout"),
            ];
            opt.step(&mut params, &grads);
        }
        if !sae.is_finite() {
            return Err(Error::Data(format!("training diverged in epoch {epoch}")));
        }
        let (loss, activity) = evaluate(&sae, x_train.view(), config)?;
        let val_loss = sae_loss(&sae, x_val.view(), config.lambda)?.total;
        log::debug!(
            "epoch {epoch}: total {:.6} recon {:.6} penalty {:.6} val {:.6} activity {:.3}",
            loss.total,
            loss.recon,
            loss.penalty,
            val_loss,
            activity
        );
        epochs.push(EpochRecord {
            epoch,
            total_loss: loss.total,
            recon_loss: loss.recon,
            sparsity_penalty: loss.penalty,
            val_loss,
            mean_activity_ratio: activity,
        });
        match stopper.observe(epoch, val_loss) {
            StopDecision::Improved => best = sae.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = epoch < config.max_epochs;
                break;
            }
        }
    }

    let best = match &standardizer {
        Some(s) => s.fold(&best),
        None => best,
    };
    Ok((
        best,
        TrainingTrace {
            initial_total_loss: initial.total,
            initial_val_loss: initial_val,
            epochs,
            best_epoch: stopper.best_epoch(),
            stopped_early,
        },
    ))
}

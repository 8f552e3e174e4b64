//! Autoencoder checkpoints: `w_enc.npy` (d x D), `w_dec.npy` (D x d) and a
//! JSON sidecar with biases and hyperparameters.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::model::SparseAutoencoder;
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::store::npy;

pub const W_ENC_FILE: &str = "w_enc.npy";
pub const W_DEC_FILE: &str = "w_dec.npy";
pub const SIDECAR_FILE: &str = "sae.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub format_version: String,
    pub layer_id: String,
    pub input_width: usize,
    pub latent_width: usize,
    pub b_enc: Vec<f32>,
    pub b_dec: Vec<f32>,
    pub config: TrainConfig,
    pub best_epoch: usize,
}

fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    npy::write_f32_matrix(&mut w, &m.mapv(|v| v as f32))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(npy::read_f32_matrix(&mut BufReader::new(file))?.mapv(f64::from))
}

/// Persists `sae` at 32-bit precision.
pub fn save_checkpoint(
    sae: &SparseAutoencoder,
    layer_id: &str,
    config: &TrainConfig,
    best_epoch: usize,
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_matrix(&dir.join(W_ENC_FILE), sae.w_enc())?;
    write_matrix(&dir.join(W_DEC_FILE), sae.w_dec())?;
    let sidecar = Sidecar {
        format_version: "1".into(),
        layer_id: layer_id.into(),
        input_width: sae.input_width(),
        latent_width: sae.latent_width(),
        b_enc: sae.b_enc().iter().map(|&v| v as f32).collect(),
        b_dec: sae.b_dec().iter().map(|&v| v as f32).collect(),
        config: config.clone(),
        best_epoch,
    };
    let path = dir.join(SIDECAR_FILE);
    fs::write(&path, serde_json::to_string_pretty(&sidecar)? + "\n")
        .map_err(|e| Error::io(&path, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<(SparseAutoencoder, Sidecar)> {
    let path = dir.join(SIDECAR_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text)?;
    let w_enc = read_matrix(&dir.join(W_ENC_FILE))?;
    let w_dec = read_matrix(&dir.join(W_DEC_FILE))?;
    if w_enc.dim() != (sidecar.latent_width, sidecar.input_width) {
        return Err(Error::Validation(format!(
            "{W_ENC_FILE} has shape {:?}, sidecar declares ({}, {})",
            w_enc.dim(),
            sidecar.latent_width,
            sidecar.input_width
        )));
    }
    let sae = SparseAutoencoder::from_parts(
        w_enc,
        Array1::from_iter(sidecar.b_enc.iter().map(|&v| v as f64)),
        w_dec,
        Array1::from_iter(sidecar.b_dec.iter().map(|&v| v as f64)),
    )
    .map_err(|e| Error::Validation(format!("checkpoint in {}: {e}", dir.display())))?;
    Ok((sae, sidecar))
}

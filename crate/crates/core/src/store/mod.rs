//! On-disk activation dumps: one directory per (run, layer) holding
//! `activations.npy` and `manifest.json`.

mod manifest;
pub mod npy;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

pub use manifest::{SampleManifest, SampleRecord, FORMAT_VERSION};

pub const ACTIVATIONS_FILE: &str = "activations.npy";
pub const MANIFEST_FILE: &str = "manifest.json";

/// N×D activations of one layer, rows are samples. Always finite and non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSet {
    layer_id: String,
    data: Array2<f32>,
}

impl ActivationSet {
    pub fn new(layer_id: impl Into<String>, data: Array2<f32>) -> Result<Self> {
        let (n, d) = data.dim();
        if n == 0 || d == 0 {
            return Err(Error::Data(format!(
                "activation matrix must be non-empty, got {n}x{d}"
            )));
        }
        if let Some(((row, col), v)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite activation {v} at row {row}, column {col}"
            )));
        }
        Ok(ActivationSet {
            layer_id: layer_id.into(),
            data,
        })
    }

    pub fn layer_id(&self) -> &str {
        &self.layer_id
    }

    pub fn data(&self) -> &Array2<f32> {
        &self.data
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f32> {
        self.data.row(i)
    }

    /// Rows upcast to `f64` for metric computation.
    pub fn to_f64(&self) -> Array2<f64> {
        self.data.mapv(f64::from)
    }

    /// The subset of rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        ActivationSet::new(
            self.layer_id.clone(),
            self.data.select(ndarray::Axis(0), indices),
        )
    }
}

/// Conventional location of a layer dump: `<root>/<layer_id>/`.
pub fn layer_dir(root: &Path, layer_id: &str) -> PathBuf {
    root.join(layer_id)
}

pub fn write_activation_set(
    set: &ActivationSet,
    manifest: &SampleManifest,
    dir: &Path,
) -> Result<()> {
    manifest.validate(set.n_samples(), set.layer_id())?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let path = dir.join(ACTIVATIONS_FILE);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    npy::write_f32_matrix(&mut w, set.data())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&path, e))?;

    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

pub fn read_activation_set(dir: &Path) -> Result<(ActivationSet, SampleManifest)> {
    let path = dir.join(ACTIVATIONS_FILE);
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let data = npy::read_f32_matrix(&mut BufReader::new(file))?;

    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: SampleManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;

    let set = ActivationSet::new(manifest.layer_id.clone(), data)?;
    manifest.validate(set.n_samples(), set.layer_id())?;
    Ok((set, manifest))
}

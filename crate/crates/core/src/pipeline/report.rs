//! Stage outputs, the assembled run report, and their JSON/CSV encodings.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interventions::{ImportanceScore, SteeringCurve};
use crate::manifold::ManifoldReport;
use crate::sae::TrainingTrace;
use crate::ArtifactKind;

pub const REPORT_FILE: &str = "report.json";
pub const REPORT_FORMAT_VERSION: &str = "1";
/// JSON schema every `report.json` validates against.
pub const REPORT_SCHEMA: &str = include_str!("../../schema/report.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Output {
    /// Why scores are absent, when they are.
    pub skipped: Option<String>,
    pub scores: Vec<ImportanceScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Layer {
    pub layer_id: String,
    pub input_width: usize,
    pub latent_width: usize,
    pub n_rows: usize,
    /// sqrt(sum |x - x_hat|^2 / sum |x|^2) over every row.
    pub recon_ratio: f64,
    /// Fraction of latent units at or below the activity threshold.
    pub mean_sparsity: f64,
    /// Fraction of latent units above the activity threshold.
    pub mean_activity_ratio: f64,
    pub active_feature_count: usize,
    /// Mean |rho| of latent units against severity; absent when severity is constant.
    pub selectivity: Option<f64>,
    pub trace: TrainingTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Output {
    pub layers: Vec<Stage2Layer>,
    pub mean_sparsity: f64,
    pub mean_activity_ratio: f64,
    pub mean_selectivity: Option<f64>,
    /// Summed over layers.
    pub active_feature_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactManifolds {
    pub artifact_kind: ArtifactKind,
    /// One report per layer, in layer order.
    pub layers: Vec<ManifoldReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage3Output {
    pub layer_id: String,
    pub baseline_accuracy: f64,
    pub curves: Vec<SteeringCurve>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage4Output {
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format_version: String,
    /// The only wall-clock field.
    pub created_at: String,
    /// Run configuration without its output directory.
    pub config: serde_json::Value,
    pub warnings: Vec<String>,
    pub stage1: Option<Vec<ImportanceScore>>,
    pub stage2: Option<Stage2Output>,
    pub stage2b: Option<Vec<ArtifactManifolds>>,
    pub stage3: Option<Vec<SteeringCurve>>,
    pub stage4: Stage4Output,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("invalid report: {e}")))
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(Error::from)
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn write_stage1_csv(path: &Path, out: &Stage1Output) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["block", "submodule", "score"])?;
    for s in &out.scores {
        w.write_record([
            s.block.to_string(),
            s.submodule.to_string(),
            s.score.to_string(),
        ])?;
    }
    finish(w, path)
}

pub(crate) fn write_stage2_csv(path: &Path, out: &Stage2Output) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "layer_id",
        "epoch",
        "total_loss",
        "recon_loss",
        "sparsity_penalty",
        "val_loss",
        "mean_activity_ratio",
    ])?;
    for layer in &out.layers {
        for e in &layer.trace.epochs {
            w.write_record([
                layer.layer_id.clone(),
                e.epoch.to_string(),
                e.total_loss.to_string(),
                e.recon_loss.to_string(),
                e.sparsity_penalty.to_string(),
                e.val_loss.to_string(),
                e.mean_activity_ratio.to_string(),
            ])?;
        }
    }
    finish(w, path)
}

/// Summary rows plus a long-format file of every rho for histograms and CDFs.
pub(crate) fn write_stage2b_csv(
    summary: &Path,
    rho: &Path,
    out: &[ArtifactManifolds],
) -> Result<()> {
    let mut w = csv_writer(summary)?;
    w.write_record([
        "artifact_kind",
        "layer_id",
        "intrinsic_dim",
        "curvature",
        "selectivity",
        "n_levels",
        "tau",
    ])?;
    let mut r = csv_writer(rho)?;
    r.write_record(["artifact_kind", "layer_id", "feature", "rho"])?;
    for a in out {
        for m in &a.layers {
            w.write_record([
                a.artifact_kind.to_string(),
                m.layer_id.clone(),
                m.intrinsic_dim.to_string(),
                m.curvature.to_string(),
                m.selectivity.to_string(),
                m.n_levels.to_string(),
                m.tau.to_string(),
            ])?;
            for (j, v) in m.rho.iter().enumerate() {
                r.write_record([
                    a.artifact_kind.to_string(),
                    m.layer_id.clone(),
                    j.to_string(),
                    v.to_string(),
                ])?;
            }
        }
    }
    finish(w, summary)?;
    finish(r, rho)
}

pub(crate) fn write_stage3_csv(path: &Path, out: &Stage3Output) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["vector_id", "alpha", "accuracy"])?;
    for c in &out.curves {
        for (a, acc) in c.alphas.iter().zip(&c.accuracy) {
            w.write_record([c.vector_id.clone(), a.to_string(), acc.to_string()])?;
        }
    }
    finish(w, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::Sublayer;

    #[test]
    fn schema_is_valid_json() {
        let v: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
        assert_eq!(v["type"], "object");
    }

    #[test]
    fn stage1_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s1.csv");
        let out = Stage1Output {
            skipped: None,
            scores: vec![ImportanceScore {
                block: 0,
                submodule: Sublayer::AttnProj,
                score: 50.38,
            }],
        };
        write_stage1_csv(&path, &out).unwrap();
        assert_eq!(
            fs::read_to_string(path).unwrap(),
            "block,submodule,score\n0,attn.proj,50.38\n"
        );
    }
}

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinds::{artifact_tag, ArtifactKind, Authenticity};

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub sample_id: String,
    pub authenticity: Authenticity,
    #[serde(with = "artifact_tag")]
    pub artifact_kind: Option<ArtifactKind>,
    pub severity: f64,
    pub base_image_id: String,
}

/// Per-row provenance for one activation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleManifest {
    pub format_version: String,
    pub layer_id: String,
    pub model_name: String,
    pub created_at: String,
    /// Severity levels any perturbed record may use.
    pub severity_grid: Vec<f64>,
    pub records: Vec<SampleRecord>,
}

impl SampleManifest {
    pub fn new(
        layer_id: impl Into<String>,
        model_name: impl Into<String>,
        severity_grid: Vec<f64>,
        records: Vec<SampleRecord>,
    ) -> Self {
        SampleManifest {
            format_version: FORMAT_VERSION.into(),
            layer_id: layer_id.into(),
            model_name: model_name.into(),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            severity_grid,
            records,
        }
    }

    /// Checks the manifest against itself and against an `rows`-row matrix
    /// for `layer_id`. Reports the first violated constraint.
    pub fn validate(&self, rows: usize, layer_id: &str) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));
        if self.format_version != FORMAT_VERSION {
            return fail(format!(
                "unsupported manifest format_version '{}'",
                self.format_version
            ));
        }
        if self.records.len() != rows {
            return fail(format!(
                "record count mismatch: manifest has {} records, activations have {} rows",
                self.records.len(),
                rows
            ));
        }
        if self.layer_id != layer_id {
            return fail(format!(
                "layer id mismatch: manifest '{}' vs activations '{}'",
                self.layer_id, layer_id
            ));
        }
        let grid = &self.severity_grid;
        if grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return fail("severity grid values must lie in [0, 1]".into());
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return fail("severity grid must be strictly increasing".into());
        }
        if grid.first().is_some_and(|&p| p != 0.0) {
            return fail("severity grid must start at 0.0".into());
        }

        let mut ids = HashSet::new();
        let mut groups: HashMap<(&str, Option<ArtifactKind>), Vec<f64>> = HashMap::new();
        for (row, r) in self.records.iter().enumerate() {
            if !ids.insert(r.sample_id.as_str()) {
                return fail(format!(
                    "duplicate sample_id '{}' at row {row}",
                    r.sample_id
                ));
            }
            if !r.severity.is_finite() || !(0.0..=1.0).contains(&r.severity) {
                return fail(format!("row {row}: severity {} outside [0, 1]", r.severity));
            }
            match r.artifact_kind {
                None if r.severity != 0.0 => {
                    return fail(format!(
                        "row {row}: severity must be 0 when artifact_kind is none"
                    ))
                }
                Some(_) if !grid.contains(&r.severity) => {
                    return fail(format!(
                        "row {row}: severity {} is not on the declared grid",
                        r.severity
                    ))
                }
                _ => {}
            }
            groups
                .entry((r.base_image_id.as_str(), r.artifact_kind))
                .or_default()
                .push(r.severity);
        }
        for ((base, kind), mut sev) in groups {
            sev.sort_by(f64::total_cmp);
            if sev.windows(2).any(|w| w[0] >= w[1]) {
                return fail(format!(
                    "base image '{base}' repeats a severity for artifact kind {}",
                    kind.map_or("none", ArtifactKind::as_str)
                ));
            }
        }
        Ok(())
    }
}

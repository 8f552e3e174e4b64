//! Stage execution. Each stage reads its inputs from disk and writes its own
//! JSON and CSV outputs; the run report is reassembled from whatever exists.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};

use super::config::{ModelSource, RunConfig, Stage, StageSelection};
use super::dataset::{importance_features, write_toy_activations};
use super::plots::emit_plots;
use super::report::*;
use super::seeds::sub_seed;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::interventions::{
    importance_table, steering_curve, steering_vector, LogisticHead, SteeringCurve, CURVE_SETTINGS,
};
use crate::manifold::{build_sweep, manifold_report, selectivity};
use crate::sae::checkpoint::{load_checkpoint, save_checkpoint};
use crate::sae::{
    active_feature_count, per_sample_activity, train_sae, LatentCodes, SparseAutoencoder,
};
use crate::store::{layer_dir, read_activation_set, ActivationSet, SampleManifest, MANIFEST_FILE};
use crate::toy::ToyEncoder;
use crate::{ArtifactKind, Authenticity};

pub const ACTIVATIONS_DIR: &str = "activations";
pub const SAE_DIR: &str = "sae";

pub struct Pipeline {
    config: RunConfig,
    exec: Execution,
    out: PathBuf,
}

impl Pipeline {
    /// `config.seed` should already be resolved; an absent seed means 0.
    pub fn new(config: RunConfig, exec: Execution) -> Result<Self> {
        config.validate()?;
        let out = config.output_dir.clone();
        Ok(Pipeline { config, exec, out })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn output_dir(&self) -> &Path {
        &self.out
    }

    fn stage_json(&self, stage: Stage) -> PathBuf {
        self.out.join(format!("{}.json", stage.file_stem()))
    }

    fn stage_csv(&self, name: &str) -> PathBuf {
        self.out.join(format!("{name}.csv"))
    }

    fn activations_root(&self) -> PathBuf {
        match &self.config.model_source {
            ModelSource::Toy => self.out.join(ACTIVATIONS_DIR),
            ModelSource::Dump { dir } => dir.clone(),
        }
    }

    fn toy_encoder(&self) -> Result<ToyEncoder> {
        ToyEncoder::new(self.config.toy.clone())
            .map_err(|e| Error::Config(format!("toy encoder: {e}")))
    }

    /// Configured layers, or every layer the source provides.
    pub fn layers(&self) -> Result<Vec<String>> {
        if !self.config.layers.is_empty() {
            if let ModelSource::Toy = self.config.model_source {
                let enc = self.toy_encoder()?;
                for l in &self.config.layers {
                    enc.layer_index(l)
                        .map_err(|e| Error::Config(e.to_string()))?;
                }
            }
            return Ok(self.config.layers.clone());
        }
        match &self.config.model_source {
            ModelSource::Toy => Ok(self.toy_encoder()?.layer_ids()),
            ModelSource::Dump { dir } => {
                let mut found: Vec<String> = fs::read_dir(dir)
                    .map_err(|e| Error::Data(format!("activation dump {}: {e}", dir.display())))?
                    .filter_map(|e| e.ok())
                    .filter(|e| e.path().join(MANIFEST_FILE).is_file())
                    .filter_map(|e| e.file_name().to_str().map(String::from))
                    .collect();
                found.sort();
                if found.is_empty() {
                    return Err(Error::Data(format!(
                        "no layer directories under {}",
                        dir.display()
                    )));
                }
                Ok(found)
            }
        }
    }

    fn require(&self, stage: Stage) -> Result<()> {
        for pre in stage.prerequisites() {
            if !self.stage_json(*pre).is_file() {
                return Err(Error::Ordering {
                    stage: stage.to_string(),
                    requires: pre.to_string(),
                });
            }
        }
        Ok(())
    }

    fn load_layer(&self, layer: &str) -> Result<(ActivationSet, SampleManifest)> {
        read_activation_set(&layer_dir(&self.activations_root(), layer))
    }

    /// Runs the selected stage(s), then rewrites `report.json` and the plots.
    pub fn run(&self, selection: StageSelection) -> Result<RunReport> {
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        let stages: Vec<Stage> = match selection {
            StageSelection::All => Stage::ALL.to_vec(),
            StageSelection::Only(s) => vec![s],
        };
        for stage in stages {
            self.require(stage)?;
            info!("stage {stage} starting");
            match stage {
                Stage::One => self.stage1()?,
                Stage::Two => self.stage2()?,
                Stage::TwoB => self.stage2b()?,
                Stage::Three => self.stage3()?,
            }
            info!("stage {stage} done");
        }
        let report = self.assemble()?;
        let path = self.out.join(REPORT_FILE);
        fs::write(&path, report.to_json()?).map_err(|e| Error::io(&path, e))?;
        emit_plots(&report, &self.out)?;
        Ok(report)
    }

    fn stage1(&self) -> Result<()> {
        let layers = self.layers()?;
        let out = match &self.config.model_source {
            ModelSource::Toy => {
                let enc = self.toy_encoder()?;
                let n = write_toy_activations(
                    &self.config,
                    &enc,
                    &layers,
                    &self.activations_root(),
                    self.exec,
                )?;
                info!("wrote {n} samples for {} layers", layers.len());
                let features = importance_features(&self.config, &enc, self.exec)?;
                let scores = importance_table(&enc, &features, self.config.ablation, self.exec)?;
                Stage1Output {
                    skipped: None,
                    scores,
                }
            }
            ModelSource::Dump { .. } => {
                for l in &layers {
                    self.load_layer(l)?;
                }
                let reason = "activation dumps carry no intervenable model".to_string();
                warn!("stage 1 importance skipped: {reason}");
                Stage1Output {
                    skipped: Some(reason),
                    scores: Vec::new(),
                }
            }
        };
        write_json(&self.stage_json(Stage::One), &out)?;
        write_stage1_csv(&self.stage_csv("stage1"), &out)
    }

    fn stage2(&self) -> Result<()> {
        let seed = self.config.seed();
        let mut layers = Vec::new();
        for (li, layer) in self.layers()?.iter().enumerate() {
            let (acts, manifest) = self.load_layer(layer)?;
            let mut tc = self.config.sae.clone();
            tc.seed = sub_seed(seed ^ self.config.sae.seed, "sae-train", li as u64);
            let init =
                SparseAutoencoder::init(acts.width(), sub_seed(seed, "sae-init", li as u64))?;
            let (sae, trace) = train_sae(init, &acts, &tc, self.exec)?;
            let dir = self.out.join(SAE_DIR).join(layer);
            save_checkpoint(&sae, layer, &tc, trace.best_epoch, &dir)?;
            // Downstream statistics use the stored precision.
            let (sae, _) = load_checkpoint(&dir)?;
            let x = acts.to_f64();
            let recon = sae.reconstruct_batch(x.view())?;
            let err: f64 = (&recon - &x).mapv(|v| v * v).sum();
            let norm: f64 = x.mapv(|v| v * v).sum();
            let codes = LatentCodes::new(sae.encode_batch(x.view())?)?;
            let stats = per_sample_activity(&codes, tc.eps_active);
            let p: Vec<f64> = manifest.records.iter().map(|r| r.severity).collect();
            let sel = match selectivity(codes.matrix().view(), &p) {
                Ok((_, s)) => Some(s),
                Err(Error::Argument(_)) => None,
                Err(e) => return Err(e),
            };
            info!(
                "{layer}: best epoch {}, recon ratio {:.4}",
                trace.best_epoch,
                (err / norm).sqrt()
            );
            layers.push(Stage2Layer {
                layer_id: layer.clone(),
                input_width: sae.input_width(),
                latent_width: sae.latent_width(),
                n_rows: acts.n_samples(),
                recon_ratio: if norm > 0.0 { (err / norm).sqrt() } else { 0.0 },
                mean_sparsity: stats.mean_sparsity,
                mean_activity_ratio: stats.mean_activity_ratio,
                active_feature_count: active_feature_count(&codes, tc.eps_active),
                selectivity: sel,
                trace,
            });
        }
        let n = layers.len() as f64;
        let sels: Vec<f64> = layers.iter().filter_map(|l| l.selectivity).collect();
        let out = Stage2Output {
            mean_sparsity: layers.iter().map(|l| l.mean_sparsity).sum::<f64>() / n,
            mean_activity_ratio: layers.iter().map(|l| l.mean_activity_ratio).sum::<f64>() / n,
            mean_selectivity: (!sels.is_empty())
                .then(|| sels.iter().sum::<f64>() / sels.len() as f64),
            active_feature_count: layers.iter().map(|l| l.active_feature_count).sum(),
            layers,
        };
        write_json(&self.stage_json(Stage::Two), &out)?;
        write_stage2_csv(&self.stage_csv("stage2"), &out)
    }

    fn stage2b(&self) -> Result<()> {
        let layers = self.layers()?;
        let loaded: Vec<(ActivationSet, SampleManifest)> = layers
            .iter()
            .map(|l| self.load_layer(l))
            .collect::<Result<_>>()?;
        let pairs: Vec<(ArtifactKind, usize)> = ArtifactKind::ALL
            .iter()
            .flat_map(|k| (0..layers.len()).map(move |li| (*k, li)))
            .collect();
        let reports = self.exec.map(&pairs, |(kind, li)| {
            let (acts, manifest) = &loaded[*li];
            let sweep = build_sweep(acts, manifest, *kind)?;
            let (x, p) = sweep.raw_samples();
            manifold_report(
                &layers[*li],
                &sweep,
                (x.view(), &p),
                self.config.tau,
                self.config.dimension_basis,
            )
        });
        let mut reports = reports.into_iter();
        let mut out = Vec::with_capacity(ArtifactKind::ALL.len());
        for kind in ArtifactKind::ALL {
            let per_layer = reports
                .by_ref()
                .take(layers.len())
                .collect::<Result<Vec<_>>>()?;
            out.push(ArtifactManifolds {
                artifact_kind: kind,
                layers: per_layer,
            });
        }
        write_json(&self.stage_json(Stage::TwoB), &out)?;
        write_stage2b_csv(
            &self.stage_csv("stage2b"),
            &self.stage_csv("stage2b_rho"),
            &out,
        )
    }

    fn stage3(&self) -> Result<()> {
        let layer = self.config.steering_layer.clone();
        if !self.layers()?.contains(&layer) {
            return Err(Error::Config(format!(
                "steering layer {layer} is not among the analyzed layers"
            )));
        }
        let (acts, manifest) = self.load_layer(&layer)?;
        let (sae, _) = load_checkpoint(&self.out.join(SAE_DIR).join(&layer))?;
        let codes = LatentCodes::new(sae.encode_batch(acts.to_f64().view())?)?;
        let labels: Vec<Authenticity> = manifest.records.iter().map(|r| r.authenticity).collect();
        let p: Vec<f64> = manifest.records.iter().map(|r| r.severity).collect();
        let (rho, _) = selectivity(codes.matrix().view(), &p)
            .map_err(|e| Error::Data(format!("latent selectivity on {layer}: {e}")))?;
        let head = LogisticHead::fit(&codes, &labels)?;
        let baseline_accuracy = head.accuracy(&codes, &labels)?;
        let d = codes.latent_width();
        let mut curves: Vec<SteeringCurve> = Vec::with_capacity(CURVE_SETTINGS.len());
        for (construction, k) in CURVE_SETTINGS {
            let v = steering_vector(&codes, &labels, rho.as_slice(), construction, k.min(d))?;
            let mut curve =
                steering_curve(&head, &codes, &labels, &v, &self.config.alphas, self.exec)?;
            curve.vector_id = format!("{}_k{k}", construction.as_str());
            curves.push(curve);
        }
        let out = Stage3Output {
            layer_id: layer,
            baseline_accuracy,
            curves,
        };
        write_json(&self.stage_json(Stage::Three), &out)?;
        write_stage3_csv(&self.stage_csv("stage3"), &out)
    }

    /// Reads every stage output present on disk into one report.
    pub fn assemble(&self) -> Result<RunReport> {
        let load = |stage: Stage| -> Option<PathBuf> {
            Some(self.stage_json(stage)).filter(|p| p.is_file())
        };
        let mut warnings = Vec::new();
        let stage1 = match load(Stage::One) {
            Some(p) => {
                let s1: Stage1Output = read_json(&p)?;
                if let Some(reason) = s1.skipped {
                    warnings.push(format!("stage 1 importance skipped: {reason}"));
                }
                Some(s1.scores)
            }
            None => None,
        };
        let stage2: Option<Stage2Output> = load(Stage::Two).map(|p| read_json(&p)).transpose()?;
        let stage2b: Option<Vec<ArtifactManifolds>> =
            load(Stage::TwoB).map(|p| read_json(&p)).transpose()?;
        let stage3: Option<Stage3Output> = load(Stage::Three).map(|p| read_json(&p)).transpose()?;
        let completed =
            stage1.is_some() && stage2.is_some() && stage2b.is_some() && stage3.is_some();
        let mut config = serde_json::to_value(&self.config)?;
        if let Some(obj) = config.as_object_mut() {
            obj.remove("output_dir");
        }
        Ok(RunReport {
            format_version: REPORT_FORMAT_VERSION.into(),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            config,
            warnings,
            stage1,
            stage2,
            stage2b,
            stage3: stage3.map(|s| s.curves),
            stage4: Stage4Output { completed },
        })
    }
}

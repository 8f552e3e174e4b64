//! Renders the toy corpus (labeled real/fake faces plus per-kind severity
//! sweeps) and stores its activations in per-layer directories.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::seeds::sub_seed;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::forge::synth::synth_face;
use crate::forge::{apply_artifact, severity_grid, Image};
use crate::store::{layer_dir, write_activation_set, ActivationSet, SampleManifest, SampleRecord};
use crate::toy::{ImageFeatures, ToyEncoder};
use crate::{ArtifactKind, Authenticity};

pub const TOY_MODEL_NAME: &str = "toy-encoder";

#[derive(Debug, Clone, Copy, PartialEq)]
enum Base {
    Synthetic(u64),
    File(usize),
}

/// How to render one sample.
#[derive(Debug, Clone, PartialEq)]
struct SampleSpec {
    record: SampleRecord,
    base: Base,
    /// Artifact baked into the base before the recorded one.
    baked: Option<(ArtifactKind, f64)>,
    artifact_seed: u64,
}

fn record(
    id: String,
    auth: Authenticity,
    kind: Option<ArtifactKind>,
    p: f64,
    base: String,
) -> SampleRecord {
    SampleRecord {
        sample_id: id,
        authenticity: auth,
        artifact_kind: kind,
        severity: p,
        base_image_id: base,
    }
}

/// Main labeled set first, then one sweep per kind in `ArtifactKind::ALL` order.
fn plan(config: &RunConfig, grid: &[f64], n_files: usize) -> Vec<SampleSpec> {
    let seed = config.seed();
    let mut next_base = 0u64;
    let mut base = || {
        let i = next_base;
        next_base += 1;
        if n_files > 0 {
            Base::File(i as usize % n_files)
        } else {
            Base::Synthetic(sub_seed(seed, "face", i))
        }
    };
    let mut specs = Vec::new();
    for i in 0..config.n_real {
        specs.push(SampleSpec {
            record: record(
                format!("real-{i:04}"),
                Authenticity::Real,
                None,
                0.0,
                format!("face-r{i:04}"),
            ),
            base: base(),
            baked: None,
            artifact_seed: 0,
        });
    }
    for i in 0..config.n_fake {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "fake", i as u64));
        let kind = ArtifactKind::ALL[rng.random_range(0..4)];
        let p = grid[rng.random_range(1..grid.len())];
        specs.push(SampleSpec {
            record: record(
                format!("fake-{i:04}"),
                Authenticity::Fake,
                Some(kind),
                p,
                format!("face-f{i:04}"),
            ),
            base: base(),
            baked: None,
            artifact_seed: sub_seed(seed, "fake-artifact", i as u64),
        });
    }
    for kind in ArtifactKind::ALL {
        let classes = [
            (Authenticity::Real, config.sweep_real),
            (Authenticity::Fake, config.sweep_fake),
        ];
        for (auth, count) in classes {
            for b in 0..count {
                let tag = if auth.is_fake() { 'f' } else { 'r' };
                let base_id = format!("sweep-{kind}-{tag}{b:02}");
                let bimg = base();
                let stream = sub_seed(seed, &base_id, 0);
                let baked = auth.is_fake().then(|| {
                    let other = ArtifactKind::ALL[(kind.index() + 1 + (stream % 3) as usize) % 4];
                    (other, grid[1])
                });
                for (t, p) in grid.iter().enumerate() {
                    specs.push(SampleSpec {
                        record: record(
                            format!("{base_id}-p{t}"),
                            auth,
                            Some(kind),
                            *p,
                            base_id.clone(),
                        ),
                        base: bimg,
                        baked,
                        artifact_seed: stream,
                    });
                }
            }
        }
    }
    specs
}

fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("no PNG files in {}", dir.display())));
    }
    Ok(files)
}

struct Renderer<'a> {
    encoder: &'a ToyEncoder,
    side: usize,
    max_blur: f64,
    files: Vec<Image>,
}

impl Renderer<'_> {
    fn render(&self, spec: &SampleSpec) -> Result<Image> {
        let mut img = match spec.base {
            Base::Synthetic(s) => synth_face(self.side, s),
            Base::File(i) => self.files[i].clone(),
        };
        let mask = self.encoder.mask_for(&img)?;
        if let Some((kind, p)) = spec.baked {
            img = apply_artifact(&img, kind, p, &mask, spec.artifact_seed ^ 1, self.max_blur)?;
        }
        if let Some(kind) = spec.record.artifact_kind {
            img = apply_artifact(
                &img,
                kind,
                spec.record.severity,
                &mask,
                spec.artifact_seed,
                self.max_blur,
            )?;
        }
        Ok(img)
    }
}

/// Renders every sample, encodes it, and writes one activation directory per layer.
///
/// Returns the number of samples written.
pub fn write_toy_activations(
    config: &RunConfig,
    encoder: &ToyEncoder,
    layers: &[String],
    root: &Path,
    exec: Execution,
) -> Result<usize> {
    let grid = severity_grid(config.artifacts.levels, config.artifacts.p_max)?;
    let files = match &config.images_dir {
        Some(dir) => list_pngs(dir)?
            .iter()
            .map(|p| Image::load_png(p, config.image_side))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let renderer = Renderer {
        encoder,
        side: config.image_side,
        max_blur: config.artifacts.max_blur_radius_px,
        files,
    };
    let specs = plan(config, &grid, renderer.files.len());
    let features: Vec<ImageFeatures> = exec
        .map(&specs, |s| {
            renderer.render(s).and_then(|img| encoder.features(&img))
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let indices: Vec<usize> = layers
        .iter()
        .map(|l| encoder.layer_index(l))
        .collect::<Result<_>>()?;
    let outputs = exec.map(&features, |f| encoder.forward(f, &[]));
    let mut mats: Vec<Array2<f32>> = indices
        .iter()
        .map(|&i| Array2::zeros((specs.len(), encoder.layer_widths()[i])))
        .collect();
    for (r, out) in outputs.into_iter().enumerate() {
        let out = out?;
        for (m, &li) in mats.iter_mut().zip(&indices) {
            m.row_mut(r).assign(&out.layers[li].mapv(|v| v as f32));
        }
    }
    let records: Vec<SampleRecord> = specs.iter().map(|s| s.record.clone()).collect();
    for (layer, m) in layers.iter().zip(mats) {
        let set = ActivationSet::new(layer.clone(), m)?;
        let manifest =
            SampleManifest::new(layer.clone(), TOY_MODEL_NAME, grid.clone(), records.clone());
        write_activation_set(&set, &manifest, &layer_dir(root, layer))?;
    }
    if config.save_samples > 0 {
        write_samples(
            &renderer,
            &specs,
            config.save_samples,
            &root.join("samples"),
        )?;
    }
    Ok(specs.len())
}

/// PNGs for the first `per_kind` sweep bases of each kind at every level.
fn write_samples(
    renderer: &Renderer<'_>,
    specs: &[SampleSpec],
    per_kind: usize,
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut bases: Vec<&str> = Vec::new();
    for s in specs
        .iter()
        .filter(|s| s.record.base_image_id.starts_with("sweep-"))
    {
        let kind = s.record.artifact_kind.expect("sweeps are tagged");
        let seen = bases
            .iter()
            .filter(|b| b.starts_with(&format!("sweep-{kind}-")))
            .count();
        let id = s.record.base_image_id.as_str();
        if !bases.contains(&id) {
            if seen >= per_kind {
                continue;
            }
            bases.push(id);
        }
        renderer
            .render(s)?
            .save_png(&dir.join(format!("{}.png", s.record.sample_id)))?;
    }
    Ok(())
}

/// Features for importance scoring: the first `per_class` real and fake samples.
pub fn importance_features(
    config: &RunConfig,
    encoder: &ToyEncoder,
    exec: Execution,
) -> Result<Vec<ImageFeatures>> {
    let grid = severity_grid(config.artifacts.levels, config.artifacts.p_max)?;
    let files = match &config.images_dir {
        Some(dir) => list_pngs(dir)?
            .iter()
            .map(|p| Image::load_png(p, config.image_side))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let specs = plan(config, &grid, files.len());
    let renderer = Renderer {
        encoder,
        side: config.image_side,
        max_blur: config.artifacts.max_blur_radius_px,
        files,
    };
    let k = config.importance_samples;
    let chosen: Vec<SampleSpec> = specs[..config.n_real]
        .iter()
        .take(k)
        .chain(
            specs[config.n_real..config.n_real + config.n_fake]
                .iter()
                .take(k),
        )
        .cloned()
        .collect();
    exec.map(&chosen, |s| {
        renderer.render(s).and_then(|img| encoder.features(&img))
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::read_activation_set;

    fn small() -> RunConfig {
        RunConfig {
            n_real: 3,
            n_fake: 4,
            sweep_real: 1,
            sweep_fake: 1,
            image_side: 32,
            seed: Some(5),
            ..RunConfig::default()
        }
    }

    #[test]
    fn plan_has_labeled_set_then_sweeps() {
        let c = small();
        let grid = severity_grid(8, 0.7).unwrap();
        let specs = plan(&c, &grid, 0);
        assert_eq!(specs.len(), 3 + 4 + 4 * 2 * 8);
        assert!(specs[..3].iter().all(|s| s.record.artifact_kind.is_none()));
        assert!(specs[3..7].iter().all(|s| s.record.severity > 0.0));
        let sweep = &specs[7..15];
        assert!(sweep
            .iter()
            .all(|s| s.base == sweep[0].base && s.artifact_seed == sweep[0].artifact_seed));
        assert_eq!(
            sweep.iter().map(|s| s.record.severity).collect::<Vec<_>>(),
            grid
        );
        assert_eq!(plan(&c, &grid, 0), specs);
    }

    #[test]
    fn written_layers_validate() {
        let c = small();
        let enc = ToyEncoder::new(c.toy.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let layers = vec!["L2".to_string(), "L5".to_string()];
        let n =
            write_toy_activations(&c, &enc, &layers, dir.path(), Execution::Sequential).unwrap();
        assert_eq!(n, 71);
        let (set, manifest) = read_activation_set(&layer_dir(dir.path(), "L5")).unwrap();
        assert_eq!(set.width(), 768);
        assert_eq!(manifest.records.len(), 71);
        let f = importance_features(&c, &enc, Execution::Sequential).unwrap();
        assert_eq!(f.len(), 3 + 4);
    }
}

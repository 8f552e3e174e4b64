//! Activation dumps written by an external extractor, run stage by stage.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use forensic_manifold::forge::severity_grid;
use forensic_manifold::pipeline::{
    ModelSource, Pipeline, RunConfig, RunReport, Stage, StageSelection, PLOTS_DIR, REPORT_FILE,
    REPORT_SCHEMA,
};
use forensic_manifold::sae::TrainConfig;
use forensic_manifold::store::{
    layer_dir, write_activation_set, ActivationSet, SampleManifest, SampleRecord,
};
use forensic_manifold::{ArtifactKind, Authenticity, Error, Execution};

const WIDTH: usize = 64;
const LAYERS: [&str; 2] = ["blk_a", "blk_b"];

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

/// Labeled rows plus two real and two fake sweep bases per kind; each kind
/// moves activations along its own coordinate, fakes sit +1.5 on coordinate 0.
fn write_dump(root: &Path) {
    let grid = severity_grid(8, 0.7).unwrap();
    let mut rows: Vec<(SampleRecord, Vec<f64>)> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = |rng: &mut ChaCha8Rng| {
        (0..WIDTH)
            .map(|_| 0.3 * rng.sample::<f64, _>(StandardNormal))
            .collect::<Vec<f64>>()
    };
    for i in 0..20 {
        let fake = i % 2 == 1;
        let mut x = noise(&mut rng);
        if fake {
            x[0] += 1.5;
        }
        let auth = if fake {
            Authenticity::Fake
        } else {
            Authenticity::Real
        };
        let kind = fake.then_some(ArtifactKind::ALL[i % 4]);
        let p = if fake { grid[1 + i % 7] } else { 0.0 };
        rows.push((
            record(format!("s{i:02}"), auth, kind, p, format!("b{i:02}")),
            x,
        ));
    }
    for kind in ArtifactKind::ALL {
        for b in 0..4 {
            let fake = b >= 2;
            let base = noise(&mut rng);
            for (t, p) in grid.iter().enumerate() {
                let mut x = base.clone();
                x[1 + kind.index()] += 4.0 * p;
                if fake {
                    x[0] += 1.5;
                }
                let auth = if fake {
                    Authenticity::Fake
                } else {
                    Authenticity::Real
                };
                let id = format!("{kind}-{b}");
                rows.push((record(format!("{id}-p{t}"), auth, Some(kind), *p, id), x));
            }
        }
    }
    for (li, layer) in LAYERS.iter().enumerate() {
        let data = Array2::from_shape_fn((rows.len(), WIDTH), |(r, c)| {
            (rows[r].1[c] * (1.0 + li as f64)) as f32
        });
        let set = ActivationSet::new(*layer, data).unwrap();
        let records = rows.iter().map(|(r, _)| r.clone()).collect();
        let manifest = SampleManifest::new(*layer, "external-extractor", grid.clone(), records);
        write_activation_set(&set, &manifest, &layer_dir(root, layer)).unwrap();
    }
}

fn config(dump: &Path, out: &Path) -> RunConfig {
    RunConfig {
        model_source: ModelSource::Dump {
            dir: dump.to_path_buf(),
        },
        steering_layer: "blk_b".into(),
        sae: TrainConfig {
            lr: 1e-3,
            max_epochs: 3,
            ..TrainConfig::default()
        },
        seed: Some(3),
        output_dir: out.to_path_buf(),
        ..RunConfig::default()
    }
}

#[test]
fn dump_runs_stage_by_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let dump = tmp.path().join("dump");
    write_dump(&dump);
    let out = tmp.path().join("out");
    let pipeline = Pipeline::new(config(&dump, &out), Execution::Sequential).unwrap();
    assert_eq!(pipeline.layers().unwrap(), LAYERS);

    let early = pipeline.run(StageSelection::Only(Stage::Two)).unwrap_err();
    assert!(matches!(early, Error::Ordering { .. }), "{early}");
    assert_eq!(early.exit_code(), 4);

    let r1 = pipeline.run(StageSelection::Only(Stage::One)).unwrap();
    assert_eq!(r1.stage1.as_deref(), Some(&[][..]));
    assert!(r1
        .warnings
        .iter()
        .any(|w| w.contains("stage 1 importance skipped")));
    assert!(!r1.stage4.completed);

    let r2 = pipeline.run(StageSelection::Only(Stage::Two)).unwrap();
    let s2 = r2.stage2.as_ref().unwrap();
    assert_eq!(s2.layers.len(), 2);
    assert!(s2
        .layers
        .iter()
        .all(|l| l.input_width == WIDTH && l.latent_width == WIDTH / 8));
    assert!((s2.mean_sparsity + s2.mean_activity_ratio - 1.0).abs() < 1e-12);

    let r2b = pipeline.run(StageSelection::Only(Stage::TwoB)).unwrap();
    let s2b = r2b.stage2b.as_ref().unwrap();
    assert_eq!(s2b.len(), 4);
    for (entry, kind) in s2b.iter().zip(ArtifactKind::ALL) {
        assert_eq!(entry.artifact_kind, kind);
        assert_eq!(entry.layers.len(), 2);
        assert!(entry.layers.iter().all(|m| m.n_levels == 8));
    }

    let report = pipeline.run(StageSelection::Only(Stage::Three)).unwrap();
    let curves = report.stage3.as_ref().unwrap();
    assert_eq!(curves.len(), 5);
    assert!(curves.iter().all(|c| c.accuracy.len() == c.alphas.len()));
    assert!(report.stage4.completed);

    let text = fs::read_to_string(out.join(REPORT_FILE)).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let schema: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator
        .iter_errors(&value)
        .map(|e| e.to_string())
        .collect();
    assert!(errors.is_empty(), "{errors:?}");
    assert!(value["config"].get("output_dir").is_none());
    assert_eq!(RunReport::from_json(&text).unwrap().stage4, report.stage4);

    for csv in ["stage1", "stage2", "stage2b", "stage2b_rho", "stage3"] {
        assert!(out.join(format!("{csv}.csv")).is_file(), "{csv}.csv");
    }
    let mut svgs: Vec<String> = fs::read_dir(out.join(PLOTS_DIR))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    svgs.sort();
    // stage 1 was skipped, so there is no importance chart
    assert_eq!(
        svgs,
        [
            "manifold_metrics.svg",
            "sae_loss.svg",
            "selectivity.svg",
            "steering.svg"
        ]
    );
}

#[test]
fn dump_layers_must_exist() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let pipeline = Pipeline::new(
        config(&empty, &tmp.path().join("out")),
        Execution::Sequential,
    )
    .unwrap();
    let err = pipeline.run(StageSelection::All).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
}

#[test]
fn sequential_and_parallel_reports_match() {
    let tmp = tempfile::tempdir().unwrap();
    let dump = tmp.path().join("dump");
    write_dump(&dump);
    let run = |exec: Execution, name: &str| {
        let out = tmp.path().join(name);
        Pipeline::new(config(&dump, &out), exec)
            .unwrap()
            .run(StageSelection::All)
            .unwrap();
        let text = fs::read_to_string(out.join(REPORT_FILE)).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["created_at"] = serde_json::Value::Null;
        v
    };
    assert_eq!(
        run(Execution::Sequential, "seq"),
        run(Execution::Parallel, "par")
    );
}

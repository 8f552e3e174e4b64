//! Sequential vs rayon execution of the crate's data-parallel loops.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use forensic_manifold::forge::synth::synth_face;
use forensic_manifold::forge::{apply_artifact, severity_grid};
use forensic_manifold::interventions::{importance_table, AblationMode};
use forensic_manifold::sae::{loss_and_gradients, SparseAutoencoder};
use forensic_manifold::toy::{
    generate_synthetic_codes, ImageFeatures, ToyEncoder, ToyEncoderConfig,
};
use forensic_manifold::{ArtifactKind, Execution};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn sae_gradients(c: &mut Criterion) {
    let data = generate_synthetic_codes(1024, 256, 32, 4, 7).unwrap().data;
    let sae = SparseAutoencoder::init(256, 1).unwrap();
    let mut group = c.benchmark_group("sae_loss_and_gradients");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| loss_and_gradients(&sae, black_box(data.view()), 1e-3, exec).unwrap())
        });
    }
    group.finish();
}

fn render_features(c: &mut Criterion) {
    let enc = ToyEncoder::new(ToyEncoderConfig::default()).unwrap();
    let grid = severity_grid(8, 0.7).unwrap();
    let seeds: Vec<u64> = (0..16).collect();
    let mut group = c.benchmark_group("render_blur_sweep_features");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                exec.map(&seeds, |&s| {
                    let img = synth_face(96, s);
                    let mask = enc.mask_for(&img).unwrap();
                    grid.iter()
                        .map(|&p| {
                            let out = apply_artifact(&img, ArtifactKind::Blur, p, &mask, s, 10.0)
                                .unwrap();
                            enc.features(&out).unwrap()
                        })
                        .collect::<Vec<ImageFeatures>>()
                })
            })
        });
    }
    group.finish();
}

fn importance(c: &mut Criterion) {
    let enc = ToyEncoder::new(ToyEncoderConfig::default()).unwrap();
    let samples: Vec<ImageFeatures> = (0..16)
        .map(|s| enc.features(&synth_face(96, s)).unwrap())
        .collect();
    let mut group = c.benchmark_group("importance_table");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                importance_table(&enc, black_box(&samples), AblationMode::Zero, exec).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, sae_gradients, render_features, importance);
criterion_main!(benches);

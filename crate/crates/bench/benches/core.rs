use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use itn_bench::{oblique_pose, phantom_volume};
use itn_core::inference::{multi_init_infer, InferenceConfig};
use itn_core::predictor::{Architecture, ClassHeads, ExactOracle, RegressionMode, RegressorModel};
use itn_core::rng::stream_rng;
use itn_core::volume::{extract_input, extract_plane, InputMode};

fn plane_extraction(c: &mut Criterion) {
    let pose = oblique_pose();
    for (n, s) in [(128, 64), (64, 32)] {
        let v = phantom_volume(n);
        c.bench_function(&format!("extract_plane s={s} on {n}^3"), |b| {
            b.iter(|| extract_plane(black_box(&v), black_box(&pose), s).unwrap())
        });
    }
}

fn network_forward(c: &mut Criterion) {
    let v = phantom_volume(64);
    for input in [InputMode::Single, InputMode::Triplet] {
        let model = RegressorModel::random(
            Architecture::default(),
            RegressionMode::Quat,
            ClassHeads::BOTH,
            input,
            0.1,
            &mut stream_rng(1, 0),
        )
        .unwrap();
        let images = extract_input(&v, &oblique_pose(), 32, input).unwrap();
        c.bench_function(&format!("forward {input:?}"), |b| b.iter(|| model.forward(black_box(&images)).unwrap()));
    }
}

fn oracle_detection(c: &mut Criterion) {
    let v = phantom_volume(64);
    let oracle = ExactOracle::new(oblique_pose());
    let cfg = InferenceConfig::default();
    c.bench_function("multi_init_infer K=5 N=10 (exact oracle)", |b| {
        b.iter(|| multi_init_infer(black_box(&v), &oracle, &cfg).unwrap())
    });
}

criterion_group!(benches, plane_extraction, network_forward, oracle_detection);
criterion_main!(benches);

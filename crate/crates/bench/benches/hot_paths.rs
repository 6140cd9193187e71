//! Timings for the per-sample probe, one forward pass, AUC and the solver.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use gdrift_core::attacks::{gdrift_features, ProbeDirection};
use gdrift_core::classifier::{auc, solve};
use gdrift_core::lm::{forward, init_model, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn model() -> ModelConfig {
    ModelConfig::small(403)
}

fn bench_model(c: &mut Criterion) {
    let cfg = model();
    let mut params = init_model(&cfg, 1).unwrap();
    let probe = ProbeDirection::random(cfg.model_dim, 1).unwrap();
    let tokens: Vec<usize> = (0..12).map(|i| (i * 37) % cfg.vocab_size).collect();
    c.bench_function("forward_12_tokens", |b| b.iter(|| forward(black_box(&params), &tokens).unwrap()));
    c.bench_function("gdrift_features_12_tokens", |b| {
        b.iter(|| gdrift_features(&mut params, &tokens, 5, &probe, 1e-2).unwrap())
    });
}

fn bench_classifier(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let labels: Vec<bool> = (0..1000).map(|i| i % 2 == 0).collect();
    let scores: Vec<f64> = labels.iter().map(|&l| rng.random::<f64>() + f64::from(u8::from(l)) * 0.3).collect();
    c.bench_function("auc_1000", |b| b.iter(|| auc(black_box(&scores), &labels).unwrap()));
    let rows: Vec<Vec<f64>> = labels
        .iter()
        .take(700)
        .map(|&l| (0..7).map(|_| rng.random::<f64>() + if l { 0.2 } else { 0.0 }).collect())
        .collect();
    c.bench_function("solve_700x7", |b| {
        b.iter_batched(|| rows.clone(), |x| solve(&x, &labels[..700], 1e-2).unwrap(), BatchSize::SmallInput)
    });
}

criterion_group!(benches, bench_model, bench_classifier);
criterion_main!(benches);

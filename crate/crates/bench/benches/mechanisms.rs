use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use geodp_core::mechanisms::one_hot;
use geodp_core::{
    add_gaussian_noise, compose_rdp_gaussian, exponential_select, gaussian_sigma, randomize_bit, randomize_onehot,
    RdpOptions, RngStream,
};

fn mechanisms(c: &mut Criterion) {
    let mut rng = RngStream::new(1);
    c.bench_function("randomize_bit", |b| b.iter(|| randomize_bit(black_box(true), 1.0, &mut rng).unwrap()));

    let v = one_hot(3, 8);
    c.bench_function("randomize_onehot_k8", |b| b.iter(|| randomize_onehot(black_box(&v), 1.0, &mut rng).unwrap()));

    let candidates: Vec<u32> = (1..=8).collect();
    let utilities: Vec<f64> = candidates.iter().map(|&r| f64::from(u8::from(r == 4))).collect();
    c.bench_function("exponential_select_k8", |b| {
        b.iter(|| exponential_select(&candidates, black_box(&utilities), 1.0, 1.0, &mut rng).unwrap())
    });

    let values = vec![0.5; 1024];
    let sigma = gaussian_sigma(1.0, 1.0, 1.5e-7).unwrap();
    c.bench_function("gaussian_noise_1024", |b| {
        b.iter(|| add_gaussian_noise(black_box(&values), sigma, &mut rng).unwrap())
    });

    let opts = RdpOptions::default();
    c.bench_function("rdp_100_steps", |b| {
        b.iter(|| compose_rdp_gaussian(black_box(1.0), 1.0, 100, 1e-5, &opts).unwrap())
    });
}

criterion_group!(benches, mechanisms);
criterion_main!(benches);

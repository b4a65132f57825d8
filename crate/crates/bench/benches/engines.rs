use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use fluctuant_bench::{harmonic, random_quantum, unit_ramp};
use fluctuant_core::{classical, quantum, PhasePoint};

fn leapfrog(c: &mut Criterion) {
    let model = harmonic();
    let mut group = c.benchmark_group("leapfrog");
    for steps in [1_000, 10_000] {
        let protocol = unit_ramp(steps);
        group.bench_with_input(BenchmarkId::from_parameter(steps), &steps, |b, &steps| {
            b.iter(|| classical::integrate(&model, &protocol, black_box(PhasePoint::new(0.3, -0.2)), steps, false))
        });
    }
    group.finish();
}

fn propagator(c: &mut Criterion) {
    let mut group = c.benchmark_group("propagator");
    for n in [2, 8, 16] {
        let model = random_quantum(n);
        let protocol = unit_ramp(256);
        group.bench_with_input(BenchmarkId::new("dim", n), &n, |b, _| {
            b.iter(|| quantum::propagator(&model, black_box(&protocol), 256))
        });
    }
    group.finish();
}

fn tpm(c: &mut Criterion) {
    let mut group = c.benchmark_group("tpm_distribution");
    for n in [4, 16] {
        let model = random_quantum(n);
        let protocol = unit_ramp(64);
        group.bench_with_input(BenchmarkId::new("dim", n), &n, |b, _| {
            b.iter(|| quantum::tpm_distribution(&model, black_box(&protocol), 1.0, 64, 1e-9))
        });
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = leapfrog, propagator, tpm
}
criterion_main!(benches);

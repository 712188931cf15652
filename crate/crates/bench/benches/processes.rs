//! Criterion benchmarks: raw per-round simulation throughput for each
//! process, the overhead of in-run verification, and the one-step oracle
//! costs on a settled state.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use ballsim::{
    expected_balls_one_step, expected_phi_ratio_one_step, rng_for_rep, simulate, simulate_with,
    BiasKind, PhiThreshold, ProbabilityVector, ProcessConfig, ProcessKind, Verifier, VerifyMode,
};

const BINS: usize = 10_000;
const ROUNDS: u64 = 10_000;

fn cfg(kind: ProcessKind) -> ProcessConfig {
    ProcessConfig { bins: BINS, kind }
}

fn process_rounds(c: &mut Criterion) {
    let cases = [
        ("one_choice", ProcessKind::OneChoice),
        ("two_choice", ProcessKind::DChoice { d: 2 }),
        ("one_plus_beta", ProcessKind::OnePlusBeta { beta: 0.5 }),
        ("quantile", ProcessKind::Quantile { delta: 0.5 }),
        ("packing", ProcessKind::Packing),
        ("tight_packing", ProcessKind::TightPacking),
        ("memory", ProcessKind::Memory),
        ("biased_packing", ProcessKind::BiasedPacking { a: 2, b: 2, bias: BiasKind::MaxBias }),
    ];
    let mut group = c.benchmark_group("rounds");
    group.throughput(Throughput::Elements(ROUNDS));
    for (name, kind) in cases {
        group.bench_with_input(BenchmarkId::from_parameter(name), &kind, |b, &kind| {
            b.iter(|| {
                let mut rng = rng_for_rep(1, 0);
                simulate(&cfg(kind), ROUNDS, &mut rng).expect("valid configuration")
            })
        });
    }
    group.finish();
}

fn verified_rounds(c: &mut Criterion) {
    let cases = [
        ("packing", ProcessKind::Packing),
        ("memory", ProcessKind::Memory),
        ("two_choice", ProcessKind::DChoice { d: 2 }),
    ];
    let mut group = c.benchmark_group("verified_rounds");
    group.throughput(Throughput::Elements(ROUNDS));
    for (name, kind) in cases {
        group.bench_with_input(BenchmarkId::from_parameter(name), &kind, |b, &kind| {
            b.iter(|| {
                // Audit mode checks every round without stopping, which is
                // the worst case for one-ball baselines.
                let mut verifier = Verifier::new(kind, BINS, VerifyMode::Audit);
                let mut rng = rng_for_rep(1, 0);
                simulate_with(&cfg(kind), ROUNDS, &mut rng, &mut verifier)
                    .expect("valid configuration")
            })
        });
    }
    group.finish();
}

fn one_step_oracles(c: &mut Criterion) {
    // A settled state with a realistic class profile.
    let mut rng = rng_for_rep(2, 0);
    let state = simulate(&cfg(ProcessKind::Packing), 100_000, &mut rng).expect("valid configuration");
    let uniform = ProbabilityVector::Approx(vec![1.0 / BINS as f64; BINS]);

    let mut group = c.benchmark_group("one_step_oracles");
    group.bench_function("expected_balls", |b| {
        b.iter(|| expected_balls_one_step(&state, &uniform))
    });
    group.bench_function("expected_phi_ratio", |b| {
        b.iter(|| expected_phi_ratio_one_step(&state, 0.5, PhiThreshold::NonNegative))
    });
    group.finish();
}

criterion_group!(benches, process_rounds, verified_rounds, one_step_oracles);
criterion_main!(benches);

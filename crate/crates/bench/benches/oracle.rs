//! Oracle-side benchmarks: policy queries and switch-point estimation on the
//! reference chain environment.

use criterion::{criterion_group, criterion_main, Criterion};
use regret2cause_core::{
    estimate_qcrit, fixtures, make_delta_oracle, mix, EstimationMode, InterventionSpec,
};
use std::hint::black_box;

fn policy_queries(c: &mut Criterion) {
    let oracle = make_delta_oracle(fixtures::env_a(), 0.0, 7).expect("exact oracle");
    let null = InterventionSpec::Null;
    c.bench_function("oracle_query_null", |b| {
        b.iter(|| black_box(oracle.query(&null).expect("query")))
    });
    let hard0 = InterventionSpec::Hard {
        variable: "X".into(),
        value: 0,
    };
    let hard1 = InterventionSpec::Hard {
        variable: "X".into(),
        value: 1,
    };
    let mixture = mix(0.4, &hard1, &hard0);
    c.bench_function("oracle_query_mixture", |b| {
        b.iter(|| black_box(oracle.query(&mixture).expect("query")))
    });
}

fn switch_point(c: &mut Criterion) {
    let public = fixtures::env_a().public();
    let sigma = InterventionSpec::Hard {
        variable: "X".into(),
        value: 1,
    };
    let exact = make_delta_oracle(fixtures::env_a(), 0.0, 7).expect("exact oracle");
    c.bench_function("switch_point_bisection", |b| {
        b.iter(|| {
            black_box(
                estimate_qcrit(&exact, &sigma, &public, 64, 13, EstimationMode::Bisection)
                    .expect("estimation"),
            )
        })
    });
    let noisy = make_delta_oracle(fixtures::env_a(), 0.02, 7).expect("bounded-regret oracle");
    c.bench_function("switch_point_mc_10k", |b| {
        b.iter(|| {
            black_box(
                estimate_qcrit(&noisy, &sigma, &public, 10_000, 13, EstimationMode::MonteCarlo)
                    .expect("estimation"),
            )
        })
    });
}

criterion_group!(benches, policy_queries, switch_point);
criterion_main!(benches);

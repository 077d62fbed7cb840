use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fluxmech_bench::{blue_model, probe_state};
use fluxmech_core::bifurcation::{equilibrium, g_crit_analytic, hopf_threshold};
use fluxmech_core::dynamics::{integrate, recommended_sample_dt};
use fluxmech_core::ode::Tolerance;
use fluxmech_core::response::chi_z;
use fluxmech_core::sweep::{damping_map, AxisSpec, FluxGridSpec};
use fluxmech_core::validation::flux_map_config;

fn threshold_model(ratio: f64) -> fluxmech_core::Model {
    let base = blue_model(0.0);
    let g_a = g_crit_analytic(&base.derived().unwrap(), &base.mech).unwrap();
    base.with_g(ratio * g_a)
}

fn bench_rhs(c: &mut Criterion) {
    let model = threshold_model(1.05);
    let state = probe_state();
    c.bench_function("rhs", |b| b.iter(|| model.rhs(black_box(&state))));
    c.bench_function("jacobian", |b| b.iter(|| model.jacobian(black_box(&state))));
}

fn bench_integrate(c: &mut Criterion) {
    let model = threshold_model(1.05);
    let state = probe_state();
    let dt = recommended_sample_dt(&model);
    let mut group = c.benchmark_group("integrate");
    group.sample_size(20);
    for rtol in [1e-8, 1e-10] {
        group.bench_with_input(BenchmarkId::from_parameter(rtol), &rtol, |b, &rtol| {
            b.iter(|| integrate(&model, &state, (0.0, 2000.0), Tolerance::new(rtol, 1e-12), dt).unwrap())
        });
    }
    group.finish();
}

fn bench_chi_z(c: &mut Criterion) {
    let d = threshold_model(1.0).derived().unwrap();
    c.bench_function("chi_z", |b| b.iter(|| chi_z(black_box(0.09), &d).unwrap()));
}

fn bench_equilibrium(c: &mut Criterion) {
    let model = threshold_model(0.9);
    c.bench_function("equilibrium", |b| b.iter(|| equilibrium(black_box(&model)).unwrap()));
    let base = blue_model(0.0);
    let g_a = g_crit_analytic(&base.derived().unwrap(), &base.mech).unwrap();
    c.bench_function("hopf_threshold", |b| b.iter(|| hopf_threshold(&base, (0.3 * g_a, 3.0 * g_a)).unwrap()));
}

fn bench_damping_map(c: &mut Criterion) {
    let base = flux_map_config();
    let spec = FluxGridSpec {
        phi_e0: AxisSpec::new(-0.5, 3.5, 41),
        phi_e1: AxisSpec::new(0.0, 12.0, 61),
        n_max: 3,
    };
    let mut group = c.benchmark_group("damping_map");
    group.sample_size(10);
    group.bench_function("41x61", |b| b.iter(|| damping_map(black_box(&spec), &base).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_rhs, bench_integrate, bench_chi_z, bench_equilibrium, bench_damping_map);
criterion_main!(benches);

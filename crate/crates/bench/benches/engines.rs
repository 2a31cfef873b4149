use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use kolmolab::ineq::{lsi_deficit, poincare_quotient};
use kolmolab::measures::sample_mu;
use kolmolab::model::catalog::{build, CatalogModel};
use kolmolab::ou::{evolution_measure, ou_kernel};
use kolmolab::sde::simulate;
use kolmolab::{Constants, Coupling, EvolutionEngine, GaussianEngine, Measure, MonteCarloEngine, Scheme, SimConfig, TestFunction};

fn model(name: &str) -> CatalogModel {
    build(name, 1, &BTreeMap::new()).unwrap()
}

fn cfg(paths: usize) -> SimConfig {
    SimConfig { dt: 5e-3, n_paths: paths, seed: 1, scheme: Scheme::Euler }
}

fn family() -> Vec<TestFunction> {
    vec![TestFunction::gaussian_bump(&[0.0], 0.7, 1.0, 0.0), TestFunction::tanh_coord(1, 0, 1.0, 0.0)]
}

fn kernels(c: &mut Criterion) {
    let periodic = model("ou_periodic");
    let ou = periodic.ou.as_ref().unwrap();
    let f = TestFunction::trig(1.0, 0.5, &[1.0], 0.3);
    c.bench_function("ou_kernel_build_periodic", |b| b.iter(|| ou_kernel(ou, black_box(6.0), 5.0).unwrap()));
    let k = ou_kernel(ou, 6.0, 5.0).unwrap();
    c.bench_function("ou_kernel_apply", |b| b.iter(|| k.apply(&f, black_box(&[0.3]), 1e-10).unwrap()));
    c.bench_function("evolution_measure_periodic", |b| b.iter(|| evolution_measure(ou, black_box(5.0), 1e-10).unwrap()));
}

fn paths(c: &mut Criterion) {
    let cubic = model("cubic_dissipative");
    let mut g = c.benchmark_group("monte_carlo");
    g.sample_size(10);
    g.bench_function("simulate_cubic_1k_paths_unit_span", |b| {
        b.iter(|| simulate(&cubic.spec, 4.0, 5.0, black_box(&[0.5]), &cfg(1000)).unwrap())
    });
    g.bench_function("sample_mu_cubic_1k", |b| b.iter(|| sample_mu(&cubic.spec, black_box(5.0), 1e-3, &cfg(1000)).unwrap()));
    g.finish();
}

fn engines(c: &mut Criterion) {
    let ou = model("ou_const");
    let gauss = GaussianEngine::new(ou.ou.clone().unwrap(), Constants::from(&ou.spec)).unwrap();
    let cubic = model("cubic_dissipative");
    let mc = MonteCarloEngine::new(cubic.spec.clone(), cfg(1), 200, 16);
    let fs = family();
    let gaps = [1.0, 2.0, 4.0];
    let mut g = c.benchmark_group("propagate");
    g.sample_size(10);
    g.bench_function("gaussian_engine", |b| b.iter(|| gauss.propagate(black_box(10.0), &gaps, &fs, Coupling::Synchronous).unwrap()));
    g.bench_function("monte_carlo_engine_200x16", |b| b.iter(|| mc.propagate(black_box(10.0), &gaps, &fs, Coupling::Synchronous).unwrap()));
    g.finish();
}

fn inequalities(c: &mut Criterion) {
    let ou = model("ou_const");
    let constants = Constants::from(&ou.spec);
    let gaussian = Measure::Gaussian(evolution_measure(ou.ou.as_ref().unwrap(), 5.0, 1e-10).unwrap());
    let cubic = model("cubic_dissipative");
    let cloud = Measure::Empirical(sample_mu(&cubic.spec, 5.0, 1e-3, &cfg(10_000)).unwrap());
    let f = TestFunction::tanh_coord(1, 0, 1.0, 0.2);
    c.bench_function("lsi_deficit_gaussian", |b| b.iter(|| lsi_deficit(&gaussian, &f, black_box(2.0), constants).unwrap()));
    c.bench_function("lsi_deficit_empirical_10k", |b| b.iter(|| lsi_deficit(&cloud, &f, black_box(2.0), constants).unwrap()));
    c.bench_function("poincare_empirical_10k", |b| b.iter(|| poincare_quotient(&cloud, &f, black_box(2.0)).unwrap()));
}

criterion_group!(benches, kernels, paths, engines, inequalities);
criterion_main!(benches);

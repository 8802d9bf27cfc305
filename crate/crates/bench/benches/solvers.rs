use std::f64::consts::TAU;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use geocontrol_core::reduction::{self, ReducedState};
use geocontrol_core::{dirac, heisenberg, pmp, reconstruct, AlgebraElement, PmpSolverConfig};

fn full_pmp(c: &mut Criterion) {
    let cfg = PmpSolverConfig::default().with_step(1e-2);
    let analytic = heisenberg::problem();
    let numeric = heisenberg::problem_without_derivatives();
    let mut g = c.benchmark_group("integrate_pmp");
    g.bench_function("analytic_T2pi", |b| {
        b.iter(|| pmp::integrate_pmp(&analytic, &[0.0; 3], black_box(&[1.0, 0.0, 1.0]), None, TAU, &cfg).unwrap())
    });
    g.sample_size(10);
    g.bench_function("finite_difference_T2pi", |b| {
        b.iter(|| pmp::integrate_pmp(&numeric, &[0.0; 3], black_box(&[1.0, 0.0, 1.0]), None, TAU, &cfg).unwrap())
    });
    g.finish();
}

fn reduced(c: &mut Criterion) {
    let cfg = PmpSolverConfig::default().with_step(1e-2);
    let rp = heisenberg::reduced_problem();
    let st0 = ReducedState::on_algebra(heisenberg::initial_momentum(0.3, 1.0), vec![0.0, 0.0]);
    c.bench_function("integrate_reduced_T2pi", |b| {
        b.iter(|| reduction::integrate_reduced(&rp, black_box(&st0), TAU, &cfg).unwrap())
    });
}

fn reconstruction(c: &mut Criterion) {
    let cfg = PmpSolverConfig::default().with_step(1e-2);
    let rp = heisenberg::reduced_problem();
    let st0 = ReducedState::on_algebra(heisenberg::initial_momentum(0.3, 1.0), vec![0.0, 0.0]);
    let traj = reduction::integrate_reduced(&rp, &st0, TAU, &cfg).unwrap();
    let alg = heisenberg::algebra();
    let g0 = alg.exp_nilpotent(&AlgebraElement(vec![0.0; 3])).unwrap();
    c.bench_function("reconstruct_T2pi", |b| {
        b.iter(|| reconstruct::reconstruct_trajectory(&alg, &g0, black_box(&traj)).unwrap())
    });
}

fn dirac_self_test(c: &mut Criterion) {
    c.bench_function("dirac_self_test_50x8", |b| {
        b.iter(|| dirac::random_graph_self_test(black_box(50), 8, 1))
    });
}

criterion_group!(benches, full_pmp, reduced, reconstruction, dirac_self_test);
criterion_main!(benches);

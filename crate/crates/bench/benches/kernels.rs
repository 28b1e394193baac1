use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use instablab::dynamics::{evolve_heat, evolve_wave, EvolutionControls};
use instablab::odelemmas::{ode2_blowup, verify_ode1, ComparisonProblem, Forcing, Ode2Controls};
use instablab::problem::{classify, p_critical, script_q};
use instablab::spectrum::{count_negative_modes, ground_state};
use instablab::steady::shoot_supercritical;
use instablab::{EquationKind, RadialGrid};
use instablab_bench::bubble;

fn closed_forms(c: &mut Criterion) {
    c.bench_function("classify n=12", |b| b.iter(|| classify(black_box(12), black_box(3.5))));
    c.bench_function("p_critical n=11..30", |b| b.iter(|| (11..=30).map(|n| p_critical(black_box(n)).unwrap().as_f64()).sum::<f64>()));
    c.bench_function("script_q", |b| b.iter(|| script_q(black_box(13), black_box(3.0))));
}

fn steady(c: &mut Criterion) {
    let grid = RadialGrid::uniform(100.0, 4097).unwrap();
    c.bench_function("shoot supercritical n=13 p=3, 4097 nodes", |b| {
        b.iter(|| shoot_supercritical(13, 3.0, black_box(1.0), &grid, 1e-2).unwrap())
    });
}

fn spectrum(c: &mut Criterion) {
    let mut group = c.benchmark_group("ground state");
    for nodes in [1025, 4097] {
        let (_, _, op) = bubble(60.0, nodes);
        group.bench_function(format!("bubble {nodes} nodes"), |b| b.iter(|| ground_state(black_box(&op)).unwrap()));
    }
    group.finish();
    let (_, _, op) = bubble(60.0, 4097);
    c.bench_function("negative mode count 4097 nodes", |b| b.iter(|| count_negative_modes(black_box(&op))));
}

fn dynamics(c: &mut Criterion) {
    let (spec, profile, op) = bubble(30.0, 513);
    let ground = ground_state(&op).unwrap();
    let psi: Vec<f64> = ground.chi.iter().map(|x| 1e-4 * x).collect();
    let controls = EvolutionControls::default();
    let mut group = c.benchmark_group("evolution to t=1, 513 nodes");
    group.sample_size(10);
    group.bench_function("heat", |b| b.iter(|| evolve_heat(&spec, &profile, &ground, black_box(&psi), 1.0, &controls).unwrap()));
    let wave = spec.with_equation(EquationKind::Wave, 1.0);
    group.bench_function("wave", |b| {
        b.iter(|| evolve_wave(&wave, &profile, &ground, black_box(&psi), &psi, 1.0, &controls).unwrap())
    });
    group.finish();
}

fn ode(c: &mut Criterion) {
    let problem = ComparisonProblem {
        a: 1.0,
        b: 2.0,
        y0: 1.0,
        yp0: 1.0,
        forcing: Forcing::Trig { c0: 1.0, c1: 1.0, omega: 1.0 },
        horizon: 10.0,
    };
    c.bench_function("comparison lemma, 300 samples", |b| b.iter(|| verify_ode1(black_box(&problem), 300).unwrap()));
    let controls = Ode2Controls::default();
    c.bench_function("blow-up lemma p=3", |b| b.iter(|| ode2_blowup(0.0, 1.0, 3.0, black_box(1.0), 0.1, &controls).unwrap()));
}

criterion_group!(benches, closed_forms, steady, spectrum, dynamics, ode);
criterion_main!(benches);

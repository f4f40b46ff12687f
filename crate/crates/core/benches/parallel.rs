use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gkls_core::generator::{build_generator, weight_vector};
use gkls_core::ising::invariant_weight;
use gkls_core::model::{BoundaryRates, BulkKinetics, Model, Topology};
use gkls_core::phase::{build_curve, phase_grid};
use gkls_core::sim::{replica_seeds, run_many, SimConfig, Span};
use gkls_core::Exec;
use std::hint::black_box;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn kinetics() -> BulkKinetics {
    BulkKinetics::new(4.3, 4.5, -0.697, -7.0 / 9.0, -2.0 / 3.0).unwrap()
}

fn generator(c: &mut Criterion) {
    let b = BoundaryRates::from_array([0.4, 0.7, 0.2, 0.5, 0.6, 0.3, 0.1, 0.8]).unwrap();
    let model = Model::open(14, kinetics(), b).unwrap();
    let mut g = c.benchmark_group("build_generator_L14");
    for (name, exec) in MODES {
        g.bench_function(name, |bch| {
            bch.iter(|| build_generator(black_box(&model), exec).unwrap())
        });
    }
    g.finish();

    let m = kinetics().measure(0.8).unwrap();
    let mut g = c.benchmark_group("ising_weights_L18");
    for (name, exec) in MODES {
        g.bench_function(name, |bch| {
            bch.iter(|| weight_vector(18, Topology::Open, exec, |cfg| invariant_weight(cfg, &m)).unwrap())
        });
    }
    g.finish();
}

fn phases(c: &mut Criterion) {
    let mut g = c.benchmark_group("phase_diagram");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new("curve_and_grid_40", name), &exec, |bch, &exec| {
            bch.iter(|| {
                let curve = build_curve(&kinetics(), 400, exec).unwrap();
                phase_grid(&curve, 40, exec).unwrap()
            })
        });
    }
    g.finish();
}

fn replicas(c: &mut Criterion) {
    let model = Model::periodic(128, kinetics()).unwrap();
    let configs: Vec<SimConfig> = replica_seeds(7, 8)
        .into_iter()
        .map(|s| {
            let mut cfg = SimConfig::new(model, Span::Events(50_000), s);
            cfg.burn_in = Some(Span::Events(10_000));
            cfg.initial = gkls_core::sim::Initial::FixedNumber(64);
            cfg
        })
        .collect();
    let mut g = c.benchmark_group("simulation_replicas_8");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |bch| bch.iter(|| run_many(black_box(&configs), exec)));
    }
    g.finish();
}

criterion_group!(benches, generator, phases, replicas);
criterion_main!(benches);

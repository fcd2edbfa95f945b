//! Single-worker versus default rayon pool on the data-parallel kernels.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sllg_core::fem::interpolate_nodal;
use sllg_core::rotation::{NoiseCoefficients, RotationField};
use sllg_core::scheme::{assemble_step_system, initial_state, run, SchemeParams};
use sllg_core::{par, Mesh, P1Space, Vec3, WienerPath};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let seq = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let full = rayon::ThreadPoolBuilder::new().build().unwrap();
    vec![("1-thread", seq), ("default", full)]
}

fn initial(space: &P1Space) -> sllg_core::NodalField3 {
    interpolate_nodal(space, |x| {
        let phi = 1.2 * (std::f64::consts::PI * x[0]).cos() * (std::f64::consts::PI * x[1]).cos();
        Vec3::new(phi.sin(), 0.0, phi.cos())
    })
    .unwrap()
}

fn rotation_evolution(c: &mut Criterion) {
    let space = P1Space::new(Mesh::structured(2, 32).unwrap()).unwrap();
    let coeffs = NoiseCoefficients::linear_gradient(1.0);
    let path = WienerPath::sample(1, 1, 20, 0.2).unwrap();
    let mut g = c.benchmark_group("rotation_evolve_20_steps");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                pool.install(|| {
                    let mut f = RotationField::new(&space, &coeffs, path.dt());
                    f.evolve_to(&path, 20).unwrap();
                    f
                })
            })
        });
    }
    g.finish();
}

fn step_assembly(c: &mut Criterion) {
    let space = P1Space::new(Mesh::structured(2, 32).unwrap()).unwrap();
    let coeffs = NoiseCoefficients::linear_gradient(1.0);
    let params = SchemeParams::new(1.0, 1.0, 1.0, 1.0, 100).unwrap();
    let (state, _) = initial_state(&space, &initial(&space)).unwrap();
    let rot = RotationField::new(&space, &coeffs, params.dt());
    let mut g = c.benchmark_group("step_assembly");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| assemble_step_system(&space, &state, &rot, &params).unwrap()))
        });
    }
    g.finish();
}

fn small_ensemble(c: &mut Criterion) {
    let space = P1Space::new(Mesh::structured(2, 6).unwrap()).unwrap();
    let coeffs = NoiseCoefficients::pair_noncommuting(1.0);
    let params = SchemeParams::new(1.0, 1.0, 1.0, 0.2, 10).unwrap();
    let m0 = initial(&space);
    let mut g = c.benchmark_group("ensemble_8_runs");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                pool.install(|| {
                    par::map_range(8, |s| {
                        let path = WienerPath::sample_stream(3, s as u64, 2, 10, 0.2).unwrap();
                        run(&space, &params, &coeffs, &path, &m0)
                            .unwrap()
                            .final_state
                            .energy
                    })
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, rotation_evolution, step_assembly, small_ensemble);
criterion_main!(benches);

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use sepdet::grid::{Grid, Interval};
use sepdet::matcore::{c, real, HermMatrix, C64};
use sepdet::nystrom;
use sepdet::par::Exec;
use sepdet::random_kernels::continuous_diagonal;
use sepdet::schrodinger::{Numerics, PotentialSpec, Shape};
use sepdet::susy_index::{self as susy, AProfile};

const PATHS: [(&str, Exec); 2] = [("serial", Exec::Serial), ("parallel", Exec::Parallel)];

fn nystrom_assembly(cr: &mut Criterion) {
    let mut g = cr.benchmark_group("nystrom");
    for panels in [16, 32] {
        let grid = Grid::uniform(Interval::finite(0.0, 1.0).unwrap(), panels, 8).unwrap();
        let k = continuous_diagonal(grid.clone(), (3, 2, 2), 11, 1.0).unwrap();
        for (name, exec) in PATHS {
            g.bench_with_input(BenchmarkId::new(format!("assemble/{name}"), panels), &exec, |b, &exec| {
                b.iter(|| nystrom::discretize_split_nodes(exec, |i, j| k.lower_node(i, j), |i, j| k.upper_node(i, j), &grid, 3).unwrap())
            });
        }
        let d = nystrom::discretize_split_nodes(Exec::Serial, |i, j| k.lower_node(i, j), |i, j| k.upper_node(i, j), &grid, 3).unwrap();
        g.bench_with_input(BenchmarkId::new("lu", panels), &d, |b, d| b.iter(|| nystrom::oracle_det(d, real(1.0)).unwrap()));
    }
    g.finish();
}

fn reduced_vs_oracle(cr: &mut Criterion) {
    let mut g = cr.benchmark_group("reduction");
    let grid = Grid::uniform(Interval::finite(0.0, 1.0).unwrap(), 32, 8).unwrap();
    let k = continuous_diagonal(grid, (3, 2, 2), 11, 1.0).unwrap();
    g.bench_function("reduced_det", |b| b.iter(|| k.reduced_det(black_box(real(1.0))).unwrap()));
    g.finish();
}

fn sweeps(cr: &mut Criterion) {
    let mut g = cr.benchmark_group("sweep");
    g.sample_size(10);
    let num = Numerics { radius: 8.0, panels: 32, q: 8 };
    let v = PotentialSpec::Scalar(Shape::Sech2 { height: -2.0, center: 0.0, width: 1.0 }).build(&num).unwrap();
    let zs: Vec<C64> = (0..32).map(|k| c(-3.0 + 0.2 * k as f64, 1e-2)).collect();
    let p = AProfile::tanh_step(HermMatrix::from_real_diag(&[-1.0]), HermMatrix::from_real_diag(&[1.0]), &num).unwrap();
    let lambdas: Vec<f64> = (1..=16).map(|k| 0.25 * k as f64).collect();
    for (name, exec) in PATHS {
        g.bench_function(BenchmarkId::new("det_profile", name), |b| b.iter(|| v.det_profile(&zs, exec).unwrap()));
        g.bench_function(BenchmarkId::new("xi_h_boundary", name), |b| {
            b.iter(|| susy::xi_h_via_boundary(&p, &lambdas, 1e-4, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, nystrom_assembly, reduced_vs_oracle, sweeps);
criterion_main!(benches);

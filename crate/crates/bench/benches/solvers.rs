//! Criterion benchmarks for the hot paths: banded LU, the principal
//! eigensolver, the disease-free solve, the Newton equilibrium and a short
//! time march.

use advsis_core::dynamics::{simulate, SimOptions, StateField};
use advsis_core::equilibria::solve_ee;
use advsis_core::expr::parse_expr;
use advsis_core::linalg::{principal_generalized_eig, solve_banded, BandedMatrix, EigMode};
use advsis_core::mesh::{Grading, Mesh};
use advsis_core::operator::assemble_operator;
use advsis_core::spectral::compute_r0;
use advsis_core::{solve_dfe, CoefficientSet};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

fn test_coeffs() -> CoefficientSet {
    CoefficientSet {
        lambda: parse_expr("1 + 0.2*x").unwrap(),
        mu: parse_expr("1").unwrap(),
        beta: parse_expr("2.5 + 0.5*sin(3*x)").unwrap(),
        gamma: parse_expr("1").unwrap(),
        d_s: 1.0,
        d_i: 1.0,
        q: 1.0,
        m: 1.0,
        length: 1.0,
    }
}

fn bench_banded_solve(c: &mut Criterion) {
    let n = 4096;
    let mut m = BandedMatrix::zeros(n, 2);
    for i in 0..n {
        m.set(i, i, 4.0 + (i as f64 * 0.01).sin());
        for off in 1..=2usize {
            if i >= off {
                m.set(i, i - off, -0.7);
            }
            if i + off < n {
                m.set(i, i + off, -0.6);
            }
        }
    }
    let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).cos()).collect();
    c.bench_function("banded_lu_solve_n4096_bw2", |b| {
        b.iter(|| solve_banded(black_box(&m), black_box(&rhs)).unwrap())
    });
}

fn bench_eigensolver(c: &mut Criterion) {
    let mesh = Mesh::new(1.0, 2000, Grading::Uniform).unwrap();
    let coeffs = test_coeffs();
    c.bench_function("r0_eigensolve_n2000", |b| {
        b.iter(|| compute_r0(black_box(&coeffs), black_box(&mesh), 1e-12).unwrap())
    });
    let n = 2000;
    let h = 1.0 / n as f64;
    let k = advsis_core::linalg::SymTridiagonal {
        diag: (0..n).map(|i| 2.0 / h + (i as f64 * 0.001).sin() * h).collect(),
        off: vec![-1.0 / h; n - 1],
    };
    let m = vec![h; n];
    c.bench_function("principal_eig_smallest_n2000", |b| {
        b.iter(|| {
            principal_generalized_eig(black_box(&k), black_box(&m), EigMode::Smallest, 1e-12)
                .unwrap()
        })
    });
}

fn bench_dfe(c: &mut Criterion) {
    let mesh = Mesh::new(1.0, 4000, Grading::Geometric { ratio: 0.999 }).unwrap();
    let coeffs = test_coeffs();
    c.bench_function("dfe_solve_n4000", |b| {
        b.iter(|| solve_dfe(black_box(&coeffs), black_box(&mesh)).unwrap())
    });
}

fn bench_operator_assembly(c: &mut Criterion) {
    let mesh = Mesh::new(1.0, 4000, Grading::Geometric { ratio: 0.999 }).unwrap();
    let potential = vec![0.5; 4000];
    c.bench_function("sg_assembly_n4000", |b| {
        b.iter(|| assemble_operator(black_box(&mesh), 0.7, 3.0, Some(black_box(&potential))).unwrap())
    });
}

fn bench_newton_ee(c: &mut Criterion) {
    let mesh = Mesh::new(1.0, 1000, Grading::Uniform).unwrap();
    let coeffs = test_coeffs();
    let warm = solve_ee(&coeffs, &mesh, None, 1e-10).unwrap();
    let init = StateField::new(
        warm.s.iter().map(|v| v * 1.3).collect(),
        warm.i.iter().map(|v| v * 0.7).collect(),
        0.0,
    )
    .unwrap();
    c.bench_function("newton_ee_n1000", |b| {
        b.iter_batched(
            || init.clone(),
            |init| solve_ee(black_box(&coeffs), black_box(&mesh), Some(&init), 1e-10).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn bench_simulate(c: &mut Criterion) {
    let mesh = Mesh::new(1.0, 500, Grading::Uniform).unwrap();
    let coeffs = test_coeffs();
    let init = StateField::new(vec![1.0; 500], vec![0.1; 500], 0.0).unwrap();
    let opts = SimOptions::new(0.05, 5.0, 1.0);
    c.bench_function("imex_march_t5_n500", |b| {
        b.iter(|| simulate(black_box(&init), black_box(&coeffs), black_box(&mesh), &opts).unwrap())
    });
}

criterion_group!(
    benches,
    bench_banded_solve,
    bench_eigensolver,
    bench_dfe,
    bench_operator_assembly,
    bench_newton_ee,
    bench_simulate
);
criterion_main!(benches);

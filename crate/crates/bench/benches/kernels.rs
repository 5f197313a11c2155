use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_node::{
    gen_circles, grad_running, integrate, project_l1, Activation, ControlTrajectory, DynamicsSpec,
    LossKind, ObjectiveSpec, OutputMap, Scheme, TimeGrid,
};

fn problem(n: usize, steps: usize) -> (DynamicsSpec, ObjectiveSpec, ControlTrajectory, Vec<f64>) {
    let data = gen_circles(n, (1.0, 3.0), 0.05, 0).unwrap();
    let spec = DynamicsSpec::inside(2, n, Activation::Tanh).unwrap();
    let output = OutputMap::new(vec![vec![1.0, 0.0], vec![-1.0, 0.0]], vec![0.0, 0.0]).unwrap();
    let obj = ObjectiveSpec::new(LossKind::CrossEntropy, output, data.labels.clone(), 8.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let grid = TimeGrid::new(5.0, steps).unwrap();
    let pts = (0..steps)
        .map(|_| {
            (0..spec.control_dim())
                .map(|_| rng.random_range(-0.5..0.5))
                .collect()
        })
        .collect();
    (
        spec,
        obj,
        ControlTrajectory::new(grid, pts).unwrap(),
        data.stacked(),
    )
}

fn kernels(c: &mut Criterion) {
    let (spec, obj, ctrl, x0) = problem(200, 15);
    for scheme in [Scheme::Euler, Scheme::Midpoint] {
        c.bench_function(&format!("integrate/{scheme:?}/n200"), |b| {
            b.iter(|| integrate(&spec, black_box(&x0), black_box(&ctrl), scheme).unwrap())
        });
        c.bench_function(&format!("grad_running/{scheme:?}/n200"), |b| {
            b.iter(|| grad_running(&spec, black_box(&x0), black_box(&ctrl), &obj, scheme).unwrap())
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let v: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
    c.bench_function("project_l1/d6", |b| {
        b.iter(|| project_l1(black_box(&v), 2.0).unwrap())
    });
}

criterion_group!(benches, kernels);
criterion_main!(benches);

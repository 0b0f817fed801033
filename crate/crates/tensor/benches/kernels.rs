use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use endodepth_tensor::gradcheck::random_tensor;
use endodepth_tensor::{par, PadMode, Shape, Tape};
use std::hint::black_box;

fn conv_forward_backward(c: &mut Criterion) {
    let x = random_tensor(Shape::new(4, 16, 32, 32), 1, -1.0, 1.0);
    let w = random_tensor(Shape::new(32, 16, 3, 3), 2, -0.1, 0.1);
    let mut group = c.benchmark_group("conv3x3_16to32_32px_b4");
    for (label, parallel) in [("sequential", false), ("parallel", true)] {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            par::set_parallel(parallel);
            b.iter(|| {
                let tape = Tape::new();
                let xv = tape.param(x.clone());
                let wv = tape.param(w.clone());
                let y = xv.conv2d(wv, None, 1, 1, PadMode::Reflect).square().sum();
                black_box(tape.backward(y));
            })
        });
    }
    group.finish();
    par::set_parallel(true);
}

fn grid_sample(c: &mut Criterion) {
    let img = random_tensor(Shape::new(4, 3, 64, 64), 3, 0.0, 1.0);
    let grid = random_tensor(Shape::new(4, 2, 64, 64), 4, -1.0, 1.0);
    let mut group = c.benchmark_group("grid_sample_64px_b4");
    for (label, parallel) in [("sequential", false), ("parallel", true)] {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            par::set_parallel(parallel);
            b.iter(|| {
                let tape = Tape::new();
                let y = tape.param(img.clone()).grid_sample(tape.param(grid.clone())).sum();
                black_box(tape.backward(y));
            })
        });
    }
    group.finish();
    par::set_parallel(true);
}

criterion_group!(benches, conv_forward_backward, grid_sample);
criterion_main!(benches);

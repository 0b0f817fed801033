//! Parallel against sequential execution of the per-frame and per-batch
//! hot paths. `par::set_parallel(false)` takes the same code path as
//! building without the `parallel` feature.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use endodepth::data::{Dataset, PreprocessConfig, Split};
use endodepth::priors::PriorSet;
use endodepth::synth::{render_sequence, write_dataset, SceneSpec, SequenceSpec};
use endodepth::training::{train_step, Batch, Models, StageId, StagePlan};
use endodepth_tensor::par;
use std::hint::black_box;

const MODES: [(&str, bool); 2] = [("sequential", false), ("parallel", true)];

fn render(c: &mut Criterion) {
    let mut scene = SceneSpec::tube_flythrough(8, 64, 0.05, 1);
    scene.supersample = 2;
    let mut group = c.benchmark_group("render_tube_8x64px");
    group.sample_size(10);
    for (label, parallel) in MODES {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            par::set_parallel(parallel);
            b.iter(|| black_box(render_sequence(&scene).unwrap()))
        });
    }
    group.finish();
    par::set_parallel(true);
}

fn training_step(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let spec = SequenceSpec {
        name: "seq".into(),
        split: Split::Train,
        scene: SceneSpec::tube_flythrough(10, 32, 0.06, 2),
    };
    write_dataset("bench", &[spec], dir.path()).unwrap();
    let ds = Dataset::open(
        &dir.path().join("manifest.toml"),
        PreprocessConfig { height: 32, width: 32 },
        PriorSet::default(),
    )
    .unwrap();
    let plan = StagePlan {
        batch_size: 4,
        ..StagePlan::for_stage(StageId::Joint)
    };
    let samples = ds.samples(Some(Split::Train), plan.interval, plan.stride).unwrap();
    let items: Vec<_> = samples[..4].iter().map(|s| ds.sample(s).unwrap()).collect();
    let batch = Batch::from_items(&items, plan.ablation).unwrap();
    let models = Models::new(&plan).unwrap();
    let mut group = c.benchmark_group("stage2_step_32px_b4");
    group.sample_size(10);
    for (label, parallel) in MODES {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            par::set_parallel(parallel);
            b.iter(|| black_box(train_step(&models, &batch, &plan).unwrap()))
        });
    }
    group.finish();
    par::set_parallel(true);
}

criterion_group!(benches, render, training_step);
criterion_main!(benches);

#![allow(dead_code)]

use endodepth::data::{Dataset, PreprocessConfig, Split};
use endodepth::priors::PriorSet;
use endodepth::synth::{write_dataset, SceneSpec, SequenceSpec};
use std::path::Path;

/// Tube fly-through dataset with one sequence per `(name, split, frames, step, seed)`.
pub fn tube_dataset(dir: &Path, size: usize, seqs: &[(&str, Split, usize, f64, u64)]) -> Dataset {
    tube_dataset_with(dir, size, seqs, |_| {})
}

pub fn tube_dataset_with(
    dir: &Path,
    size: usize,
    seqs: &[(&str, Split, usize, f64, u64)],
    edit: impl Fn(&mut SceneSpec),
) -> Dataset {
    let specs: Vec<SequenceSpec> = seqs
        .iter()
        .map(|&(name, split, frames, step, seed)| SequenceSpec {
            name: name.into(),
            split,
            scene: {
                let mut s = SceneSpec::tube_flythrough(frames, size, step, seed);
                edit(&mut s);
                s
            },
        })
        .collect();
    write_dataset("tube", &specs, dir).unwrap();
    Dataset::open(
        &dir.join("manifest.toml"),
        PreprocessConfig {
            height: size,
            width: size,
        },
        PriorSet::default(),
    )
    .unwrap()
}

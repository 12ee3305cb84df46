#![allow(dead_code)]

use std::path::Path;

use d2nn::config::{DataConfig, RunConfig, TaskSource};
use d2nn::data::{to_idx, Dataset};
use d2nn::sweep::SweepGrid;
use d2nn_core::network::ArchConfig;
use d2nn_core::readout::DetectorLayout;
use d2nn_core::train::TrainConfig;
use d2nn_core::{InputEncoding, PropagationSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Class `c` is a bright vertical bar at column band `c` plus noise.
pub fn synthetic(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(n * 28 * 28);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = (i % 10) as u8;
        for _r in 0..28 {
            for c in 0..28 {
                let on = c / 3 == class as usize;
                images.push(if on { 200 + rng.random_range(0..56) } else { rng.random_range(0..30) });
            }
        }
        labels.push(class);
    }
    Dataset::new(28, 28, images, labels).unwrap()
}

pub fn write_split(dir: &Path, stem: &str, ds: &Dataset) {
    std::fs::create_dir_all(dir).unwrap();
    let (images, labels) = to_idx(ds);
    std::fs::write(dir.join(format!("{stem}-images-idx3-ubyte")), images).unwrap();
    std::fs::write(dir.join(format!("{stem}-labels-idx1-ubyte")), labels).unwrap();
}

/// A tiny 2-task run config over synthetic IDX files under `root`.
pub fn tiny_config(root: &Path, tasks: usize) -> RunConfig {
    let mut sources = Vec::new();
    for t in 0..tasks {
        let dir = root.join(format!("task{t}"));
        write_split(&dir, "train", &synthetic(40, 10 + t as u64));
        write_split(&dir, "t10k", &synthetic(20, 20 + t as u64));
        sources.push(TaskSource {
            name: format!("task{t}"),
            dir,
            labels: Default::default(),
        });
    }
    let sub = if tasks == 4 { 2 } else { 1 };
    RunConfig {
        arch: ArchConfig {
            tasks,
            spec: PropagationSpec::default().with_grid(24, 24),
            layout: Some(DetectorLayout::centered_blocks(24, 24, 4, 2, 5, sub).unwrap()),
            seed: 1,
            ..ArchConfig::default()
        },
        train: TrainConfig {
            epochs: 1,
            batch_size: 8,
            extra_task_weights: vec![1.0; tasks.saturating_sub(2)],
            ..TrainConfig::default()
        },
        data: DataConfig {
            tasks: sources,
            train_limit: None,
            test_limit: None,
            subset_seed: 0,
            encoding: InputEncoding::default(),
        },
        noise: SweepGrid {
            detector_sigmas: vec![0.0, 0.1],
            device_sigmas: vec![0.0, 0.2],
            splitter_epsilons: vec![0.0],
            repetitions: 2,
            ..SweepGrid::default()
        },
        output_dir: root.join("out"),
    }
}

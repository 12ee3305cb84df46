//! Declarative run configuration.

use std::path::{Path, PathBuf};

use d2nn_core::network::{build_model, ArchConfig};
use d2nn_core::readout::{LabelCodec, Polarity};
use d2nn_core::train::TrainConfig;
use d2nn_core::{InputEncoding, PropagationSpec};
use serde::{Deserialize, Serialize};

use crate::data::{load_split, Split};
use crate::error::{Error, Result};
use crate::sweep::SweepGrid;
use crate::trainer::TaskData;

/// Label handling for a dataset directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelMap {
    #[default]
    Identity,
    /// EMNIST letters: keep a..j, relabelled 0..9.
    EmnistFirstTen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSource {
    pub name: String,
    /// Directory holding `{train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]`.
    pub dir: PathBuf,
    #[serde(default)]
    pub labels: LabelMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// One source per task, in task order.
    pub tasks: Vec<TaskSource>,
    /// Random subset sizes; `None` keeps the whole split.
    #[serde(default)]
    pub train_limit: Option<usize>,
    #[serde(default)]
    pub test_limit: Option<usize>,
    #[serde(default)]
    pub subset_seed: u64,
    #[serde(default)]
    pub encoding: InputEncoding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub arch: ArchConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub noise: SweepGrid,
    pub output_dir: PathBuf,
}

fn mnist_source(root: &Path, name: &str) -> TaskSource {
    TaskSource {
        name: name.into(),
        dir: root.join(name),
        labels: LabelMap::Identity,
    }
}

impl RunConfig {
    /// 100×100 grid, default topology, 10 000 / 2 000 samples per task,
    /// MNIST (argmin-coded) and Fashion-MNIST (argmax-coded).
    pub fn desk(data_root: &Path, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            arch: ArchConfig {
                spec: PropagationSpec::default().with_grid(100, 100),
                ..ArchConfig::default()
            },
            train: TrainConfig::default(),
            data: DataConfig {
                tasks: vec![mnist_source(data_root, "mnist"), mnist_source(data_root, "fashion")],
                train_limit: Some(10_000),
                test_limit: Some(2_000),
                subset_seed: 0,
                encoding: InputEncoding::default(),
            },
            noise: SweepGrid::default(),
            output_dir: output_dir.into(),
        }
    }

    /// Full 200×200 system on the complete splits.
    pub fn paper(data_root: &Path, output_dir: impl Into<PathBuf>) -> Self {
        let mut cfg = Self::desk(data_root, output_dir);
        cfg.arch.spec = PropagationSpec::default();
        cfg.data.train_limit = None;
        cfg.data.test_limit = None;
        cfg
    }

    /// Single-task baseline with the same six-layer budget (4 + 2).
    pub fn single_task(mut self, task: usize) -> Self {
        self.arch.tasks = 1;
        self.data.tasks = vec![self.data.tasks[task].clone()];
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("config parse error: {e}")]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Every problem found, empty when the config is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = build_model(&ArchConfig { seed: 0, ..self.arch.clone() }) {
            out.push(format!("arch: {e}"));
        }
        out.extend(self.train.violations().into_iter().map(|v| format!("train: {v}")));
        if self.train.extra_task_weights.len() + 2 < self.arch.tasks {
            out.push(format!(
                "train: {} tasks need {} extra_task_weights (got {})",
                self.arch.tasks,
                self.arch.tasks - 2,
                self.train.extra_task_weights.len()
            ));
        }
        if self.data.tasks.len() != self.arch.tasks {
            out.push(format!(
                "data: {} task sources for {} tasks",
                self.data.tasks.len(),
                self.arch.tasks
            ));
        }
        for t in &self.data.tasks {
            for split in [Split::Train, Split::Test] {
                let (i, l) = crate::data::split_paths(&t.dir, split);
                for p in [i, l] {
                    if !p.exists() {
                        out.push(format!("data: task {}: missing {}", t.name, p.display()));
                    }
                }
            }
        }
        if self.data.train_limit == Some(0) || self.data.test_limit == Some(0) {
            out.push("data: sample limits must be at least 1".into());
        }
        if let Err(e) = self.data.encoding.target_side(self.arch.spec.grid_rows, self.arch.spec.grid_cols) {
            out.push(format!("data.encoding: {e}"));
        }
        if self.arch.tasks == 2 {
            match LabelCodec::for_tasks(2, self.arch.classes) {
                Ok(codecs) => {
                    let argmin = codecs.iter().filter(|c| c.polarity == Polarity::Argmin).count();
                    if argmin != 1 {
                        out.push(format!("arch: 2-task mode needs exactly one argmin task, found {argmin}"));
                    }
                }
                Err(e) => out.push(format!("arch: {e}")),
            }
        }
        out.extend(self.noise.violations());
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    /// Loads every task's splits, applies label maps and subset limits.
    pub fn load_tasks(&self) -> Result<Vec<TaskData>> {
        self.data
            .tasks
            .iter()
            .enumerate()
            .map(|(t, src)| {
                let prepare = |split: Split, limit: Option<usize>, stream: u64| -> Result<crate::data::Dataset> {
                    let raw = load_split(&src.dir, split)?;
                    let mapped = match src.labels {
                        LabelMap::Identity => raw,
                        LabelMap::EmnistFirstTen => raw.emnist_first_ten(),
                    };
                    mapped.check_classes(self.arch.classes)?;
                    Ok(match limit {
                        Some(n) => {
                            let seed = self.data.subset_seed.wrapping_add(stream);
                            mapped.subset(&mapped.sample_indices(n, seed))
                        }
                        None => mapped,
                    })
                };
                Ok(TaskData {
                    name: src.name.clone(),
                    train: prepare(Split::Train, self.data.train_limit, 2 * t as u64)?,
                    test: prepare(Split::Test, self.data.test_limit, 2 * t as u64 + 1)?,
                })
            })
            .collect()
    }
}

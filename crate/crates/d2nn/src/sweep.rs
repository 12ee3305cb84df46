//! Robustness sweeps over detector, device and splitter noise.

use d2nn_core::network::{CompiledModel, MultiTaskD2NN};
use d2nn_core::noise::{noisy_decision, perturb_model, DetectorNoiseMode, NoiseSpec};
use d2nn_core::InputEncoding;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::export::csv_string;
use crate::trainer::HostPropagator;

/// Cartesian grid of noise levels, each repeated with `repetitions` seeds
/// `base_seed, base_seed + 1, …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrid {
    pub detector_sigmas: Vec<f64>,
    pub device_sigmas: Vec<f64>,
    pub splitter_epsilons: Vec<f64>,
    pub detector_mu: f64,
    pub repetitions: usize,
    pub base_seed: u64,
    pub mode: DetectorNoiseMode,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            detector_sigmas: linspace(0.0, 0.2, 5),
            device_sigmas: linspace(0.0, 0.3, 4),
            splitter_epsilons: vec![0.0],
            detector_mu: 0.0,
            repetitions: 10,
            base_seed: 0,
            mode: DetectorNoiseMode::PerPixel,
        }
    }
}

impl SweepGrid {
    /// A single all-zero point.
    pub fn zero() -> Self {
        Self {
            detector_sigmas: vec![0.0],
            device_sigmas: vec![0.0],
            splitter_epsilons: vec![0.0],
            repetitions: 1,
            ..Self::default()
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("detector_sigmas", &self.detector_sigmas),
            ("device_sigmas", &self.device_sigmas),
            ("splitter_epsilons", &self.splitter_epsilons),
        ] {
            if v.is_empty() {
                out.push(format!("noise.{name} is empty"));
            }
        }
        if self.repetitions == 0 {
            out.push("noise.repetitions must be at least 1".into());
        }
        for spec in self.points() {
            if let Err(e) = spec.validate() {
                out.push(format!("noise: {e}"));
                break;
            }
        }
        out
    }

    /// All points, device level outermost, then splitter, seed, detector.
    pub fn points(&self) -> Vec<NoiseSpec> {
        let mut out = Vec::new();
        for &device_sigma in &self.device_sigmas {
            for &splitter_epsilon in &self.splitter_epsilons {
                for r in 0..self.repetitions as u64 {
                    for &detector_sigma in &self.detector_sigmas {
                        out.push(NoiseSpec {
                            detector_sigma,
                            detector_mu: self.detector_mu,
                            device_sigma,
                            splitter_epsilon,
                            seed: self.base_seed + r,
                            mode: self.mode,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub task: usize,
    pub detector_sigma: f64,
    pub device_sigma: f64,
    pub splitter_epsilon: f64,
    pub seed: u64,
    pub accuracy: f64,
}

/// Mean and standard deviation over seeds of one (task, noise level).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub task: usize,
    pub detector_sigma: f64,
    pub device_sigma: f64,
    pub splitter_epsilon: f64,
    pub mean: f64,
    pub std: f64,
    pub repetitions: usize,
}

/// Accuracy of `specs` on one task. All specs must perturb the optics
/// identically (same device level, splitter offset and, unless the device is
/// clean, seed). The optical path runs once per sample; every detector
/// level reuses the clean intensity, drawing from the per-sample stream.
fn evaluate_group(
    model: &MultiTaskD2NN,
    propagator: &HostPropagator,
    task: usize,
    test: &Dataset,
    encoding: &InputEncoding,
    specs: &[NoiseSpec],
) -> Result<Vec<f64>> {
    let perturbed = perturb_model(model, &specs[0])?;
    let compiled = CompiledModel::new(&perturbed)?;
    let codec = &perturbed.codecs()?[task];
    let (rows, cols) = (model.spec.grid_rows, model.spec.grid_cols);
    let hits: Vec<Result<Vec<bool>>> = (0..test.len())
        .into_par_iter()
        .map(|i| {
            let x = test.encode(i, rows, cols, encoding)?;
            let image = compiled.intensity(propagator, &x)?;
            let label = test.label(i);
            specs
                .iter()
                .map(|s| Ok(noisy_decision(&compiled, &image, s, codec, &mut s.sample_rng(i as u64))? == label))
                .collect()
        })
        .collect();
    let mut correct = vec![0usize; specs.len()];
    for h in hits {
        for (c, ok) in correct.iter_mut().zip(h?) {
            *c += usize::from(ok);
        }
    }
    Ok(correct.iter().map(|&c| c as f64 / test.len() as f64).collect())
}

/// One row per (point, task), points in [`SweepGrid::points`] order.
pub fn noise_sweep(
    model: &MultiTaskD2NN,
    propagator: &HostPropagator,
    tests: &[Dataset],
    encoding: &InputEncoding,
    grid: &SweepGrid,
) -> Result<Vec<SweepRow>> {
    let problems = grid.violations();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    if tests.len() != model.tasks() {
        return Err(Error::Dataset(format!("{} test sets for {} tasks", tests.len(), model.tasks())));
    }
    if let Some(t) = tests.iter().position(Dataset::is_empty) {
        return Err(Error::Dataset(format!("test set of task {t} is empty")));
    }
    let points = grid.points();
    let mut acc: Vec<Vec<f64>> = Vec::with_capacity(points.len());
    let det = grid.detector_sigmas.len();
    let mut start = 0;
    while start < points.len() {
        // a clean optical path is identical for every seed, so all repetitions share one pass
        let len = if points[start].device_is_clean() { det * grid.repetitions } else { det };
        let specs = &points[start..start + len];
        let per_task = tests
            .iter()
            .enumerate()
            .map(|(t, test)| evaluate_group(model, propagator, t, test, encoding, specs))
            .collect::<Result<Vec<_>>>()?;
        acc.extend((0..len).map(|k| per_task.iter().map(|v| v[k]).collect()));
        start += len;
    }
    let mut rows = Vec::with_capacity(points.len() * tests.len());
    for (spec, a) in points.iter().zip(&acc) {
        for (task, &accuracy) in a.iter().enumerate() {
            rows.push(SweepRow {
                task,
                detector_sigma: spec.detector_sigma,
                device_sigma: spec.device_sigma,
                splitter_epsilon: spec.splitter_epsilon,
                seed: spec.seed,
                accuracy,
            });
        }
    }
    Ok(rows)
}

/// Groups rows by (task, levels) in first-appearance order.
pub fn summarize(rows: &[SweepRow]) -> Vec<SweepSummary> {
    let mut keys: Vec<(usize, u64, u64, u64)> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        let key = (r.task, r.detector_sigma.to_bits(), r.device_sigma.to_bits(), r.splitter_epsilon.to_bits());
        match keys.iter().position(|k| *k == key) {
            Some(i) => values[i].push(r.accuracy),
            None => {
                keys.push(key);
                values.push(vec![r.accuracy]);
            }
        }
    }
    keys.into_iter()
        .zip(values)
        .map(|((task, d, s, e), v)| {
            let n = v.len() as f64;
            // offset by the first value so identical repetitions give their exact value
            let mean = v[0] + v.iter().map(|x| x - v[0]).sum::<f64>() / n;
            let var = if v.len() > 1 {
                v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            SweepSummary {
                task,
                detector_sigma: f64::from_bits(d),
                device_sigma: f64::from_bits(s),
                splitter_epsilon: f64::from_bits(e),
                mean,
                std: var.sqrt(),
                repetitions: v.len(),
            }
        })
        .collect()
}

pub fn rows_csv(rows: &[SweepRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.task.to_string(),
                r.detector_sigma.to_string(),
                r.device_sigma.to_string(),
                r.splitter_epsilon.to_string(),
                r.seed.to_string(),
                r.accuracy.to_string(),
            ]
        })
        .collect();
    csv_string(&["task", "detector_sigma", "device_sigma", "splitter_epsilon", "seed", "accuracy"], &body)
}

pub fn summary_csv(rows: &[SweepSummary]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.task.to_string(),
                r.detector_sigma.to_string(),
                r.device_sigma.to_string(),
                r.splitter_epsilon.to_string(),
                r.mean.to_string(),
                r.std.to_string(),
                r.repetitions.to_string(),
            ]
        })
        .collect();
    csv_string(
        &["task", "detector_sigma", "device_sigma", "splitter_epsilon", "mean", "std", "repetitions"],
        &body,
    )
}

/// Mean accuracy of `task` on a 2-D grid (rows: first axis, cols: second).
pub fn heatmap(
    summary: &[SweepSummary],
    task: usize,
    rows_axis: impl Fn(&SweepSummary) -> f64,
    cols_axis: impl Fn(&SweepSummary) -> f64,
    row_levels: &[f64],
    col_levels: &[f64],
    fixed: impl Fn(&SweepSummary) -> bool,
) -> Vec<f64> {
    let mut out = vec![0.0; row_levels.len() * col_levels.len()];
    for s in summary.iter().filter(|s| s.task == task && fixed(s)) {
        let r = row_levels.iter().position(|&v| v == rows_axis(s));
        let c = col_levels.iter().position(|&v| v == cols_axis(s));
        if let (Some(r), Some(c)) = (r, c) {
            out[r * col_levels.len() + c] = s.mean;
        }
    }
    out
}

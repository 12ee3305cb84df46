//! Accuracy-per-detector efficiency reports.

use std::path::PathBuf;

use d2nn_core::metrics::acc_hw;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What `eval` writes for one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSummary {
    pub tasks: Vec<String>,
    pub accuracy: Vec<f64>,
    pub detectors: usize,
    pub samples: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub task: String,
    pub single_accuracy: f64,
    pub multi_accuracy: f64,
    pub acc_hw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub detectors_multi: usize,
    pub detectors_single_total: usize,
    pub rows: Vec<EfficiencyRow>,
}

impl EfficiencyReport {
    /// Pairs the multi-task system's task `t` with the `t`-th single-task
    /// baseline. Each baseline must be a one-task evaluation.
    pub fn from_evals(multi: &EvalSummary, singles: &[EvalSummary]) -> Result<Self> {
        if singles.len() != multi.accuracy.len() {
            return Err(Error::Dataset(format!(
                "{} single-task baselines for {} tasks",
                singles.len(),
                multi.accuracy.len()
            )));
        }
        if let Some(s) = singles.iter().find(|s| s.accuracy.len() != 1) {
            return Err(Error::Dataset(format!("baseline {:?} is not a single-task evaluation", s.tasks)));
        }
        let total: usize = singles.iter().map(|s| s.detectors).sum();
        let rows = multi
            .accuracy
            .iter()
            .zip(singles)
            .enumerate()
            .map(|(t, (&m, s))| {
                Ok(EfficiencyRow {
                    task: multi.tasks.get(t).cloned().unwrap_or_else(|| format!("task{t}")),
                    single_accuracy: s.accuracy[0],
                    multi_accuracy: m,
                    acc_hw: acc_hw(m, s.accuracy[0], multi.detectors, total)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            detectors_multi: multi.detectors,
            detectors_single_total: total,
            rows,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// `eval.json` of the multi-task checkpoint.
    pub multi: PathBuf,
    /// `eval.json` of each single-task baseline, in task order.
    pub singles: Vec<PathBuf>,
}

/// A published Acc-HW entry with the inputs it was computed from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PublishedEntry {
    pub system: &'static str,
    pub task: &'static str,
    pub acc_multi: f64,
    pub acc_single: f64,
    pub det_multi: usize,
    pub det_single_total: usize,
    /// Printed value; `None` where only "~1" is given.
    pub printed: Option<f64>,
}

const fn entry(
    system: &'static str,
    task: &'static str,
    acc_multi: f64,
    acc_single: f64,
    det_multi: usize,
    det_single_total: usize,
    printed: Option<f64>,
) -> PublishedEntry {
    PublishedEntry { system, task, acc_multi, acc_single, det_multi, det_single_total, printed }
}

/// Accuracies, detector counts and printed Acc-HW values of the two
/// published comparison tables.
pub const PUBLISHED: [PublishedEntry; 8] = [
    entry("2-task, shared 10 regions", "MNIST", 0.977, 0.981, 10, 20, Some(1.99)),
    entry("2-task, shared 10 regions", "F-MNIST", 0.886, 0.889, 10, 20, Some(1.99)),
    entry("2-task, 10+10 regions", "MNIST", 0.979, 0.981, 20, 20, None),
    entry("2-task, 10+10 regions", "F-MNIST", 0.883, 0.889, 20, 20, None),
    entry("4-task", "MNIST", 0.958, 0.981, 10, 40, Some(3.91)),
    entry("4-task", "F-MNIST", 0.857, 0.889, 10, 40, Some(3.85)),
    entry("4-task", "K-MNIST", 0.860, 0.861, 10, 40, Some(4.00)),
    entry("4-task", "E-MNIST", 0.884, 0.909, 10, 40, Some(3.89)),
];

/// Outcome of checking one published value.
#[derive(Debug, Clone, PartialEq)]
pub struct PublishedCheck {
    pub entry: PublishedEntry,
    pub computed: f64,
    /// Range reachable when each accuracy varies within its 3-decimal rounding.
    pub bounds: (f64, f64),
    /// The computed value rounds to the printed one (two decimals, or one
    /// decimal for "~1").
    pub pass: bool,
    /// The printed value's rounding interval meets `bounds`.
    pub consistent_with_input_rounding: bool,
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (x * f).round() / f
}

pub fn check_published(e: &PublishedEntry) -> Result<PublishedCheck> {
    let computed = acc_hw(e.acc_multi, e.acc_single, e.det_multi, e.det_single_total)?;
    let h = 0.0005;
    let lo = acc_hw(e.acc_multi - h, (e.acc_single + h).min(1.0), e.det_multi, e.det_single_total)?;
    let hi = acc_hw((e.acc_multi + h).min(1.0), e.acc_single - h, e.det_multi, e.det_single_total)?;
    let (printed, decimals) = match e.printed {
        Some(p) => (p, 2),
        None => (1.0, 1),
    };
    let half = 0.5 * 10f64.powi(-decimals);
    Ok(PublishedCheck {
        entry: *e,
        computed,
        bounds: (lo, hi),
        pass: round_to(computed, decimals) == printed,
        consistent_with_input_rounding: lo <= printed + half && hi >= printed - half,
    })
}

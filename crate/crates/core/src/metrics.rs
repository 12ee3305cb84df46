//! Accuracy-per-hardware figure of merit.

use alloc::vec::Vec;

use crate::{Error, Result};

/// `(acc_multi / acc_single) · (det_single_total / det_multi)`.
///
/// The cost ratio is single over multi, so a multi-task system that reuses
/// detectors scores above 1.
pub fn acc_hw(acc_multi: f64, acc_single: f64, det_multi: usize, det_single_total: usize) -> Result<f64> {
    if det_multi == 0 || det_single_total == 0 {
        return Err(Error::InvalidConfig("detector counts must be positive".into()));
    }
    for a in [acc_multi, acc_single] {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::InvalidConfig(alloc::format!("accuracy {a} outside (0, 1]")));
        }
    }
    Ok(acc_multi / acc_single * det_single_total as f64 / det_multi as f64)
}

/// [`acc_hw`] for each task.
pub fn acc_hw_per_task(acc_multi: &[f64], acc_single: &[f64], det_multi: usize, det_single_total: usize) -> Result<Vec<f64>> {
    if acc_multi.len() != acc_single.len() {
        return Err(Error::LengthMismatch {
            expected: acc_multi.len(),
            actual: acc_single.len(),
        });
    }
    acc_multi
        .iter()
        .zip(acc_single)
        .map(|(&m, &s)| acc_hw(m, s, det_multi, det_single_total))
        .collect()
}

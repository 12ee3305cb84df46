//! rustfft-backed spectral engine.

use std::fmt;
use std::sync::Arc;

use d2nn_core::{Complex, SpectralEngine};
use rustfft::{Fft, FftPlanner};

/// 2-D FFT over a row-major grid: row transforms, a transpose, column
/// transforms. `filter` multiplies in the transposed layout to skip two
/// transposes per hop.
#[derive(Clone)]
pub struct RustFftEngine {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for RustFftEngine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RustFftEngine").field("rows", &self.rows).field("cols", &self.cols).finish()
    }
}

impl RustFftEngine {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    fn scratch_len(&self) -> usize {
        [&self.row_fwd, &self.row_inv, &self.col_fwd, &self.col_inv]
            .iter()
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0)
    }

    /// Row pass, transpose into `t` (cols × rows), column pass.
    fn forward_to_transposed(&self, data: &mut [Complex], t: &mut [Complex], scratch: &mut [Complex]) {
        self.row_fwd.process_with_scratch(data, scratch);
        transpose(data, t, self.rows, self.cols);
        self.col_fwd.process_with_scratch(t, scratch);
    }

    /// Inverse of [`forward_to_transposed`], normalized.
    fn inverse_from_transposed(&self, t: &mut [Complex], data: &mut [Complex], scratch: &mut [Complex]) {
        self.col_inv.process_with_scratch(t, scratch);
        transpose(t, data, self.cols, self.rows);
        self.row_inv.process_with_scratch(data, scratch);
        let norm = 1.0 / (self.rows * self.cols) as f64;
        data.iter_mut().for_each(|z| *z *= norm);
    }
}

fn transpose(src: &[Complex], dst: &mut [Complex], rows: usize, cols: usize) {
    const BLOCK: usize = 16;
    for rb in (0..rows).step_by(BLOCK) {
        for cb in (0..cols).step_by(BLOCK) {
            for r in rb..(rb + BLOCK).min(rows) {
                for c in cb..(cb + BLOCK).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

impl SpectralEngine for RustFftEngine {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn forward(&self, data: &mut [Complex]) {
        let mut t = vec![Complex::new(0.0, 0.0); data.len()];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.scratch_len()];
        self.forward_to_transposed(data, &mut t, &mut scratch);
        transpose(&t, data, self.cols, self.rows);
    }

    fn inverse(&self, data: &mut [Complex]) {
        let mut t = vec![Complex::new(0.0, 0.0); data.len()];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.scratch_len()];
        transpose(data, &mut t, self.rows, self.cols);
        self.inverse_from_transposed(&mut t, data, &mut scratch);
    }

    fn filter(&self, data: &mut [Complex], transfer: &[Complex], conjugate: bool) {
        assert_eq!(data.len(), self.rows * self.cols);
        assert_eq!(transfer.len(), data.len());
        let mut t = vec![Complex::new(0.0, 0.0); data.len()];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.scratch_len()];
        self.forward_to_transposed(data, &mut t, &mut scratch);
        for c in 0..self.cols {
            let column = &mut t[c * self.rows..(c + 1) * self.rows];
            for (r, z) in column.iter_mut().enumerate() {
                let h = transfer[r * self.cols + c];
                *z *= if conjugate { h.conj() } else { h };
            }
        }
        self.inverse_from_transposed(&mut t, data, &mut scratch);
    }
}

//! 2-D discrete Fourier transform backends.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;

#[allow(unused_imports)] // float math is inherent in `core` on newer toolchains
use num_traits::Float;

use crate::Complex;

/// A 2-D DFT over a fixed row-major `rows × cols` grid.
///
/// `forward` is the unnormalized DFT (kernel `exp(-2πi·kn/N)`), `inverse`
/// includes the `1/(rows·cols)` factor so that `inverse(forward(x)) == x`.
pub trait SpectralEngine {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn forward(&self, data: &mut [Complex]);
    fn inverse(&self, data: &mut [Complex]);

    /// In-place `IDFT(DFT(data) ⊙ transfer)`, or with `conj(transfer)` when
    /// `conjugate` is set. `transfer` is in natural (FFT-ordered, row-major)
    /// layout.
    fn filter(&self, data: &mut [Complex], transfer: &[Complex], conjugate: bool) {
        self.forward(data);
        if conjugate {
            data.iter_mut().zip(transfer).for_each(|(d, h)| *d *= h.conj());
        } else {
            data.iter_mut().zip(transfer).for_each(|(d, h)| *d *= h);
        }
        self.inverse(data);
    }
}

impl<E: SpectralEngine + ?Sized> SpectralEngine for &E {
    fn rows(&self) -> usize {
        (**self).rows()
    }
    fn cols(&self) -> usize {
        (**self).cols()
    }
    fn forward(&self, data: &mut [Complex]) {
        (**self).forward(data)
    }
    fn inverse(&self, data: &mut [Complex]) {
        (**self).inverse(data)
    }
    fn filter(&self, data: &mut [Complex], transfer: &[Complex], conjugate: bool) {
        (**self).filter(data, transfer, conjugate)
    }
}

/// Row-column DFT by direct summation, `O(R·C·(R+C))`.
///
/// Portable and exact enough for oracles and toy grids; hosts with `std`
/// should use an FFT backend for anything larger than a few dozen pixels.
#[derive(Debug, Clone)]
pub struct NaiveDft {
    rows: usize,
    cols: usize,
    row_twiddles: Vec<Complex>,
    col_twiddles: Vec<Complex>,
}

fn twiddles(n: usize) -> Vec<Complex> {
    (0..n)
        .map(|k| {
            let angle = -TAU * k as f64 / n as f64;
            Complex::new(angle.cos(), angle.sin())
        })
        .collect()
}

impl NaiveDft {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_twiddles: twiddles(rows),
            col_twiddles: twiddles(cols),
        }
    }

    fn transform(&self, data: &mut [Complex], inverse: bool) {
        assert_eq!(data.len(), self.rows * self.cols, "buffer does not match engine grid");
        let tw = |table: &[Complex], idx: usize| {
            if inverse {
                table[idx].conj()
            } else {
                table[idx]
            }
        };

        let mut line = vec![Complex::new(0.0, 0.0); self.rows.max(self.cols)];
        // rows: transform along columns index
        for r in 0..self.rows {
            let row = &mut data[r * self.cols..(r + 1) * self.cols];
            for (k, out) in line[..self.cols].iter_mut().enumerate() {
                *out = row
                    .iter()
                    .enumerate()
                    .map(|(n, x)| x * tw(&self.col_twiddles, (k * n) % self.cols))
                    .sum();
            }
            row.copy_from_slice(&line[..self.cols]);
        }
        for c in 0..self.cols {
            for (k, out) in line[..self.rows].iter_mut().enumerate() {
                *out = (0..self.rows)
                    .map(|n| data[n * self.cols + c] * tw(&self.row_twiddles, (k * n) % self.rows))
                    .sum();
            }
            for r in 0..self.rows {
                data[r * self.cols + c] = line[r];
            }
        }
        if inverse {
            let scale = 1.0 / (self.rows * self.cols) as f64;
            data.iter_mut().for_each(|x| *x *= scale);
        }
    }
}

impl SpectralEngine for NaiveDft {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn forward(&self, data: &mut [Complex]) {
        self.transform(data, false)
    }
    fn inverse(&self, data: &mut [Complex]) {
        self.transform(data, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_transforms_to_constant() {
        let dft = NaiveDft::new(4, 6);
        let mut data = vec![Complex::new(0.0, 0.0); 24];
        data[0] = Complex::new(1.0, 0.0);
        dft.forward(&mut data);
        assert!(data.iter().all(|x| (x - Complex::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn single_mode_lands_in_one_bin() {
        // x[r, c] = exp(2πi (r/4 + 2c/6)) -> bin (1, 2) with weight R*C
        let (rows, cols) = (4, 6);
        let dft = NaiveDft::new(rows, cols);
        let mut data: Vec<Complex> = (0..rows * cols)
            .map(|i| {
                let (r, c) = (i / cols, i % cols);
                let a = TAU * (r as f64 / 4.0 + 2.0 * c as f64 / 6.0);
                Complex::new(a.cos(), a.sin())
            })
            .collect();
        dft.forward(&mut data);
        for (i, x) in data.iter().enumerate() {
            let expected = if i == cols + 2 { 24.0 } else { 0.0 };
            assert!((x - Complex::new(expected, 0.0)).norm() < 1e-12, "bin {i}: {x}");
        }
    }

    #[test]
    fn inverse_undoes_forward() {
        let dft = NaiveDft::new(5, 3);
        let original: Vec<Complex> = (0..15).map(|i| Complex::new(i as f64, (i * i) as f64 * 0.1)).collect();
        let mut data = original.clone();
        dft.forward(&mut data);
        dft.inverse(&mut data);
        for (a, b) in data.iter().zip(&original) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}

//! Mapping byte images onto the input plane.

use alloc::format;
use alloc::vec;

use core::f64::consts::PI;

#[allow(unused_imports)] // float math is inherent in `core` on newer toolchains
use num_traits::Float;

use crate::field::ComplexField;
use crate::{Complex, Error, Result};

/// How pixel values become a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum EncodingMode {
    /// Amplitude in [0, 1], zero phase.
    #[default]
    Amplitude,
    /// Unit amplitude inside the image square, phase in [0, π].
    Phase,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct InputEncoding {
    /// Side of the centered image square as a fraction of the smaller grid side.
    pub fraction: f64,
    pub mode: EncodingMode,
}

impl Default for InputEncoding {
    fn default() -> Self {
        Self {
            fraction: 1.0,
            mode: EncodingMode::Amplitude,
        }
    }
}

impl InputEncoding {
    /// Side length in pixels of the image square on a `rows × cols` grid.
    pub fn target_side(&self, rows: usize, cols: usize) -> Result<usize> {
        if !(self.fraction.is_finite() && self.fraction > 0.0) {
            return Err(Error::InvalidConfig(format!("encoding fraction must be > 0 (got {})", self.fraction)));
        }
        let side = Float::round(self.fraction * rows.min(cols) as f64) as usize;
        if side == 0 {
            return Err(Error::InvalidConfig("encoded image would be empty".into()));
        }
        if side > rows || side > cols {
            return Err(Error::InvalidConfig(format!(
                "encoded image of side {side} exceeds the {rows}x{cols} grid"
            )));
        }
        Ok(side)
    }
}

/// Bilinearly resamples a `width × height` byte image into a centered square
/// on a `rows × cols` grid; everything outside the square is zero.
pub fn encode_input(
    image: &[u8],
    width: usize,
    height: usize,
    rows: usize,
    cols: usize,
    encoding: &InputEncoding,
) -> Result<ComplexField> {
    if width == 0 || height == 0 {
        return Err(Error::Empty("input image"));
    }
    if image.len() != width * height {
        return Err(Error::LengthMismatch {
            expected: width * height,
            actual: image.len(),
        });
    }
    let side = encoding.target_side(rows, cols)?;
    let (top, left) = ((rows - side) / 2, (cols - side) / 2);
    let pixel = |r: usize, c: usize| f64::from(image[r * width + c]) / 255.0;
    // pixel-centre mapping, clamped at the borders
    let source = |i: usize, n: usize| {
        let x = ((i as f64 + 0.5) * n as f64 / side as f64 - 0.5).clamp(0.0, (n - 1) as f64);
        let lo = x as usize;
        (lo, (lo + 1).min(n - 1), x - lo as f64)
    };
    let mut data = vec![Complex::new(0.0, 0.0); rows * cols];
    for i in 0..side {
        let (r0, r1, wr) = source(i, height);
        for j in 0..side {
            let (c0, c1, wc) = source(j, width);
            let a = pixel(r0, c0) + (pixel(r0, c1) - pixel(r0, c0)) * wc;
            let b = pixel(r1, c0) + (pixel(r1, c1) - pixel(r1, c0)) * wc;
            let v = a + (b - a) * wr;
            data[(top + i) * cols + left + j] = match encoding.mode {
                EncodingMode::Amplitude => Complex::new(v, 0.0),
                EncodingMode::Phase => Complex::from_polar(1.0, PI * v),
            };
        }
    }
    Ok(ComplexField::from_raw(rows, cols, data))
}

//! Complex scalar fields and free-space propagation between planes.
//!
//! Propagation uses the Fresnel transfer function
//! `H(fx, fy) = exp(jkd) · exp(-jπλd(fx² + fy²))` sampled on the FFT-ordered
//! frequency grid `f = m / (NΔ)`, `m ∈ [-N/2, N/2)`. The impulse response used
//! by the direct-convolution oracle is defined as the inverse DFT of that
//! same sampled `H`, so both paths describe one linear operator.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

#[allow(unused_imports)] // float math is inherent in `core` on newer toolchains
use num_traits::Float;

use crate::spectral::{NaiveDft, SpectralEngine};
use crate::{Complex, Error, Result};

/// Largest grid side accepted by [`propagate_direct`].
pub const DIRECT_CAP: usize = 64;

/// A `rows × cols` grid of complex amplitudes, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    rows: usize,
    cols: usize,
    data: Vec<Complex>,
}

impl ComplexField {
    /// Builds a field, rejecting wrong lengths and non-finite samples.
    pub fn new(rows: usize, cols: usize, data: Vec<Complex>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        if data.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("field data".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::new(0.0, 0.0); rows * cols],
        }
    }

    /// Fills the grid from `f(row, col)`. Panics if `f` yields a non-finite value.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex) -> Self {
        let data: Vec<Complex> = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        assert!(data.iter().all(|z| z.is_finite()), "non-finite field sample");
        Self { rows, cols, data }
    }

    /// Wraps a buffer produced by the crate's own kernels without re-scanning it.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<Complex>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[Complex] {
        &self.data
    }

    /// Mutable access to the samples. Callers are responsible for keeping them finite.
    pub fn data_mut(&mut self) -> &mut [Complex] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex {
        self.data[row * self.cols + col]
    }

    /// Total power `Σ|u|²`.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Pointwise `|u|²`.
    pub fn intensity(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn scaled(&self, factor: Complex) -> Self {
        Self::from_raw(self.rows, self.cols, self.data.iter().map(|z| z * factor).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.is_finite())
    }

    /// Largest pointwise `|a - b|`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub(crate) fn ensure_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if (self.rows, self.cols) != (rows, cols) {
            return Err(Error::ShapeMismatch {
                expected: (rows, cols),
                actual: (self.rows, self.cols),
            });
        }
        Ok(())
    }
}

/// Geometry of the free-space hop between consecutive planes.
///
/// Lengths are in meters. The wavenumber is always derived from
/// `wavelength`, never stored.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct PropagationSpec {
    pub wavelength: f64,
    pub layer_distance: f64,
    pub pixel_pitch: f64,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Linear (zero-padded to 2N) instead of circular convolution.
    #[cfg_attr(feature = "serde", serde(default))]
    pub zero_pad: bool,
}

impl Default for PropagationSpec {
    /// 0.75 mm light, 0.4 mm pixels, 30 mm spacing on a 200×200 grid.
    fn default() -> Self {
        Self {
            wavelength: 0.75e-3,
            layer_distance: 30e-3,
            pixel_pitch: 0.4e-3,
            grid_rows: 200,
            grid_cols: 200,
            zero_pad: false,
        }
    }
}

impl PropagationSpec {
    pub fn with_grid(mut self, rows: usize, cols: usize) -> Self {
        self.grid_rows = rows;
        self.grid_cols = cols;
        self
    }

    pub fn with_distance(mut self, distance: f64) -> Self {
        self.layer_distance = distance;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.wavelength) {
            return Err(Error::InvalidSpec("wavelength must be positive"));
        }
        if !positive(self.layer_distance) {
            return Err(Error::InvalidSpec("layer distance must be positive"));
        }
        if !positive(self.pixel_pitch) {
            return Err(Error::InvalidSpec("pixel pitch must be positive"));
        }
        for n in [self.grid_rows, self.grid_cols] {
            if n < 2 || n % 2 != 0 {
                return Err(Error::InvalidSpec("grid dimensions must be even and at least 2"));
            }
        }
        Ok(())
    }

    /// `k = 2π/λ`.
    pub fn wavenumber(&self) -> f64 {
        TAU / self.wavelength
    }

    /// Grid the spectral engine runs on: the field grid, or twice it when padding.
    pub fn compute_shape(&self) -> (usize, usize) {
        if self.zero_pad {
            (2 * self.grid_rows, 2 * self.grid_cols)
        } else {
            (self.grid_rows, self.grid_cols)
        }
    }
}

/// FFT-ordered spatial frequency of bin `index` on an `n`-point grid.
pub fn frequency(index: usize, n: usize, pitch: f64) -> f64 {
    let m = if index < n / 2 {
        index as f64
    } else {
        index as f64 - n as f64
    };
    m / (n as f64 * pitch)
}

fn transfer_samples(spec: &PropagationSpec) -> Vec<Complex> {
    let (rows, cols) = spec.compute_shape();
    let d = spec.layer_distance;
    let lambda = spec.wavelength;
    // kd reduced modulo 2π before it meets the quadratic term
    let cycles = d / lambda;
    let kd = TAU * (cycles - cycles.floor());
    let chirp = PI * lambda * d;
    let fy: Vec<f64> = (0..rows).map(|i| frequency(i, rows, spec.pixel_pitch)).collect();
    let fx: Vec<f64> = (0..cols).map(|i| frequency(i, cols, spec.pixel_pitch)).collect();
    let mut out = Vec::with_capacity(rows * cols);
    for &v in &fy {
        for &u in &fx {
            let phase = kd - chirp * (u * u + v * v);
            out.push(Complex::new(phase.cos(), phase.sin()));
        }
    }
    out
}

/// Samples the Fresnel transfer function on the (possibly padded) compute grid.
pub fn transfer_function(spec: &PropagationSpec) -> Result<ComplexField> {
    spec.validate()?;
    let (rows, cols) = spec.compute_shape();
    Ok(ComplexField::from_raw(rows, cols, transfer_samples(spec)))
}

/// Sampled impulse response `h = IDFT(H)` on the compute grid, evaluated
/// with the direct DFT.
pub fn impulse_response(spec: &PropagationSpec) -> Result<ComplexField> {
    let mut h = transfer_function(spec)?;
    let (rows, cols) = h.shape();
    NaiveDft::new(rows, cols).inverse(h.data_mut());
    Ok(h)
}

/// Fresnel propagator bound to one spec and one spectral engine.
///
/// Holds the sampled transfer function so repeated hops only pay for the
/// transforms.
#[derive(Debug, Clone)]
pub struct Propagator<E> {
    spec: PropagationSpec,
    transfer: Vec<Complex>,
    engine: E,
}

impl<E: SpectralEngine> Propagator<E> {
    /// The engine must be planned for `spec.compute_shape()`.
    pub fn new(spec: PropagationSpec, engine: E) -> Result<Self> {
        spec.validate()?;
        let shape = spec.compute_shape();
        if (engine.rows(), engine.cols()) != shape {
            return Err(Error::ShapeMismatch {
                expected: shape,
                actual: (engine.rows(), engine.cols()),
            });
        }
        Ok(Self {
            spec,
            transfer: transfer_samples(&spec),
            engine,
        })
    }

    pub fn spec(&self) -> &PropagationSpec {
        &self.spec
    }

    pub fn transfer(&self) -> &[Complex] {
        &self.transfer
    }

    pub fn engine(&self) -> &E {
        &self.engine
    }

    pub fn propagate(&self, field: &ComplexField) -> Result<ComplexField> {
        field.ensure_shape(self.spec.grid_rows, self.spec.grid_cols)?;
        let mut data = field.data.clone();
        self.propagate_in_place(&mut data);
        Ok(ComplexField::from_raw(field.rows, field.cols, data))
    }

    /// Applies the hop to a grid-sized buffer. Panics on a wrong length.
    pub fn propagate_in_place(&self, data: &mut [Complex]) {
        self.apply(data, false);
    }

    /// Applies the adjoint hop (filter `conj(H)`), the exact inverse when
    /// padding is off.
    pub fn adjoint_in_place(&self, data: &mut [Complex]) {
        self.apply(data, true);
    }

    fn apply(&self, data: &mut [Complex], conjugate: bool) {
        let (rows, cols) = (self.spec.grid_rows, self.spec.grid_cols);
        assert_eq!(data.len(), rows * cols, "buffer does not match propagation grid");
        if !self.spec.zero_pad {
            self.engine.filter(data, &self.transfer, conjugate);
            return;
        }
        let pcols = 2 * cols;
        let mut padded = vec![Complex::new(0.0, 0.0); 4 * rows * cols];
        for r in 0..rows {
            padded[r * pcols..r * pcols + cols].copy_from_slice(&data[r * cols..(r + 1) * cols]);
        }
        self.engine.filter(&mut padded, &self.transfer, conjugate);
        for r in 0..rows {
            data[r * cols..(r + 1) * cols].copy_from_slice(&padded[r * pcols..r * pcols + cols]);
        }
    }
}

/// One-shot FFT propagation: `IFFT(FFT(field) ⊙ H)`.
pub fn propagate<E: SpectralEngine>(field: &ComplexField, spec: &PropagationSpec, engine: E) -> Result<ComplexField> {
    Propagator::new(*spec, engine)?.propagate(field)
}

/// Brute-force propagation by circular convolution with the sampled impulse
/// response (linear convolution when `spec.zero_pad`). `O(N⁴)`; grids above
/// [`DIRECT_CAP`] are refused.
pub fn propagate_direct(field: &ComplexField, spec: &PropagationSpec) -> Result<ComplexField> {
    spec.validate()?;
    field.ensure_shape(spec.grid_rows, spec.grid_cols)?;
    let (rows, cols) = spec.compute_shape();
    if rows > DIRECT_CAP || cols > DIRECT_CAP {
        return Err(Error::OracleCap {
            rows,
            cols,
            cap: DIRECT_CAP,
        });
    }
    let h = impulse_response(spec)?;
    let h = h.data();
    let (in_rows, in_cols) = field.shape();
    let mut out = vec![Complex::new(0.0, 0.0); in_rows * in_cols];
    for y in 0..in_rows {
        for x in 0..in_cols {
            let mut acc = Complex::new(0.0, 0.0);
            for yp in 0..in_rows {
                let dy = (y + rows - yp) % rows;
                for xp in 0..in_cols {
                    let dx = (x + cols - xp) % cols;
                    acc += field.data[yp * in_cols + xp] * h[dy * cols + dx];
                }
            }
            out[y * in_cols + x] = acc;
        }
    }
    if out.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite(format!("direct propagation of {rows}x{cols} grid")));
    }
    Ok(ComplexField::from_raw(in_rows, in_cols, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_field(rows: usize, cols: usize, seed: u64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexField::from_fn(rows, cols, |_, _| {
            Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn small_spec(n: usize) -> PropagationSpec {
        PropagationSpec::default().with_grid(n, n)
    }

    #[test]
    fn transfer_function_is_unit_modulus() {
        let h = transfer_function(&small_spec(32)).unwrap();
        assert!(h.data().iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn dc_sample_is_exp_jkd() {
        let spec = PropagationSpec {
            layer_distance: 12.3e-3,
            ..small_spec(16)
        };
        let h = transfer_function(&spec).unwrap();
        let kd = spec.wavenumber() * spec.layer_distance;
        let expected = Complex::new(kd.cos(), kd.sin());
        assert!((h.get(0, 0) - expected).norm() < 1e-9);
    }

    #[test]
    fn default_geometry_has_integer_cycles_at_dc() {
        // d/λ = 30 / 0.75 = 40 whole cycles
        let h = transfer_function(&small_spec(8)).unwrap();
        assert!(h.get(0, 0).arg().abs() < 1e-9);
    }

    #[test]
    fn rejects_odd_and_nonpositive_specs() {
        assert!(small_spec(7).validate().is_err());
        assert!(PropagationSpec { wavelength: 0.0, ..small_spec(8) }.validate().is_err());
        assert!(PropagationSpec { pixel_pitch: -1.0, ..small_spec(8) }.validate().is_err());
        assert!(small_spec(0).validate().is_err());
    }

    #[test]
    fn frequencies_are_fft_ordered() {
        let f: Vec<f64> = (0..4).map(|i| frequency(i, 4, 0.5)).collect();
        assert_eq!(f, [0.0, 0.5, -1.0, -0.5]);
    }

    #[test]
    fn propagation_preserves_energy() {
        let spec = small_spec(16);
        let field = random_field(16, 16, 3);
        let out = propagate(&field, &spec, NaiveDft::new(16, 16)).unwrap();
        let rel = (out.energy() - field.energy()).abs() / field.energy();
        assert!(rel < 1e-12, "{rel}");
    }

    #[test]
    fn point_source_spreads() {
        let spec = small_spec(16);
        let mut field = ComplexField::zeros(16, 16);
        field.data_mut()[8 * 16 + 8] = Complex::new(1.0, 0.0);
        let out = propagate(&field, &spec, NaiveDft::new(16, 16)).unwrap();
        assert!((out.energy() - 1.0).abs() < 1e-12);
        let lit = out.data().iter().filter(|z| z.norm_sqr() > 1e-6).count();
        assert!(lit > 1);
    }

    #[test]
    fn direct_delta_returns_impulse_response() {
        let spec = small_spec(8);
        let mut field = ComplexField::zeros(8, 8);
        field.data_mut()[0] = Complex::new(1.0, 0.0);
        let out = propagate_direct(&field, &spec).unwrap();
        let h = impulse_response(&spec).unwrap();
        assert!(out.max_abs_diff(&h) < 1e-15);
    }

    #[test]
    fn direct_matches_fft_path() {
        let spec = small_spec(8);
        let field = random_field(8, 8, 11);
        let fast = propagate(&field, &spec, NaiveDft::new(8, 8)).unwrap();
        let slow = propagate_direct(&field, &spec).unwrap();
        assert!(fast.max_abs_diff(&slow) < 1e-9);
    }

    #[test]
    fn direct_refuses_large_grids() {
        let spec = small_spec(66);
        let field = ComplexField::zeros(66, 66);
        assert!(matches!(propagate_direct(&field, &spec), Err(Error::OracleCap { .. })));
    }

    #[test]
    fn adjoint_inverts_hop() {
        let spec = small_spec(8);
        let prop = Propagator::new(spec, NaiveDft::new(8, 8)).unwrap();
        let field = random_field(8, 8, 5);
        let mut data = field.data().to_vec();
        prop.propagate_in_place(&mut data);
        prop.adjoint_in_place(&mut data);
        let back = ComplexField::new(8, 8, data).unwrap();
        assert!(back.max_abs_diff(&field) < 1e-12);
    }

    #[test]
    fn padded_fft_matches_padded_direct() {
        let spec = PropagationSpec {
            zero_pad: true,
            ..small_spec(8)
        };
        let field = random_field(8, 8, 21);
        let fast = propagate(&field, &spec, NaiveDft::new(16, 16)).unwrap();
        let slow = propagate_direct(&field, &spec).unwrap();
        assert!(fast.max_abs_diff(&slow) < 1e-9);
        // light leaves the window, never gained
        assert!(fast.energy() <= field.energy() + 1e-12);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let prop = Propagator::new(small_spec(8), NaiveDft::new(8, 8)).unwrap();
        let err = prop.propagate(&ComplexField::zeros(4, 8)).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
        assert!(Propagator::new(small_spec(8), NaiveDft::new(4, 4)).is_err());
    }

    #[test]
    fn field_constructor_rejects_bad_input() {
        assert!(ComplexField::new(2, 2, vec![Complex::new(0.0, 0.0); 3]).is_err());
        let mut data = vec![Complex::new(0.0, 0.0); 4];
        data[2] = Complex::new(f64::NAN, 0.0);
        assert!(ComplexField::new(2, 2, data).is_err());
    }
}

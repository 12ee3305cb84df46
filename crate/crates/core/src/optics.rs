//! Phase masks, diffractive layers and the beam splitter.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::TAU;

#[allow(unused_imports)] // float math is inherent in `core` on newer toolchains
use num_traits::Float;
use rand::Rng;

use crate::field::{ComplexField, Propagator};
use crate::spectral::SpectralEngine;
use crate::{Complex, Error, Result};

/// Trainable phase delays of one diffractive layer, in radians.
///
/// Values are stored unconstrained; the applied delay is `theta mod 2π`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMask {
    rows: usize,
    cols: usize,
    theta: Vec<f64>,
}

impl PhaseMask {
    pub fn new(rows: usize, cols: usize, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                actual: theta.len(),
            });
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("phase mask".into()));
        }
        Ok(Self { rows, cols, theta })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            theta: alloc::vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Self {
            rows,
            cols,
            theta: (0..rows * cols).map(|i| f(i / cols, i % cols)).collect(),
        }
    }

    /// I.i.d. uniform phases on `[0, 2π)`.
    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        Self::from_fn(rows, cols, |_, _| rng.random_range(0.0..TAU))
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

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    /// `exp(jθ)` per pixel.
    pub fn phasors(&self) -> Vec<Complex> {
        self.theta.iter().map(|&t| Complex::new(t.cos(), t.sin())).collect()
    }

    /// Copy with every phase reduced into `[0, 2π)`.
    pub fn wrapped(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            theta: self.theta.iter().map(|&t| wrap_phase(t)).collect(),
        }
    }
}

/// Reduces a phase into `[0, 2π)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let r = theta - TAU * (theta / TAU).floor();
    // floor rounding can land exactly on 2π
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Pure-phase modulation `u · exp(jθ)`.
pub fn modulate(field: &ComplexField, mask: &PhaseMask) -> Result<ComplexField> {
    field.ensure_shape(mask.rows, mask.cols)?;
    let data = field
        .data()
        .iter()
        .zip(&mask.theta)
        .map(|(z, &t)| z * Complex::new(t.cos(), t.sin()))
        .collect();
    Ok(ComplexField::from_raw(mask.rows, mask.cols, data))
}

/// Propagate one hop to the mask plane, then modulate.
pub fn diffractive_layer<E: SpectralEngine>(
    field: &ComplexField,
    mask: &PhaseMask,
    propagator: &Propagator<E>,
) -> Result<ComplexField> {
    field.ensure_shape(mask.rows, mask.cols)?;
    modulate(&propagator.propagate(field)?, mask)
}

/// Amplitude fractions of a two-port beam splitter.
///
/// The nominal 50-50 element scales each port's amplitude by ½ (each port
/// carries a quarter of the power); [`BeamSplitterSpec::lossless`] gives the
/// power-conserving `1/√2` variant.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct BeamSplitterSpec {
    pub transmitted_fraction: f64,
    pub reflected_fraction: f64,
}

impl Default for BeamSplitterSpec {
    fn default() -> Self {
        Self::nominal()
    }
}

impl BeamSplitterSpec {
    pub fn new(transmitted_fraction: f64, reflected_fraction: f64) -> Result<Self> {
        let spec = Self {
            transmitted_fraction,
            reflected_fraction,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub const fn nominal() -> Self {
        Self {
            transmitted_fraction: 0.5,
            reflected_fraction: 0.5,
        }
    }

    pub fn lossless() -> Self {
        let a = core::f64::consts::FRAC_1_SQRT_2;
        Self {
            transmitted_fraction: a,
            reflected_fraction: a,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("transmitted", self.transmitted_fraction),
            ("reflected", self.reflected_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidSplitter(format!("{name} fraction {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Amplitude factor applied to each of `branches` outputs.
    ///
    /// Two branches get `(transmitted, reflected)`. Wider fan-outs split the
    /// light evenly, `2/T` times the port fraction, alternating ports, so the
    /// nominal splitter gives every branch `1/T`. A single branch bypasses
    /// the splitter.
    pub fn branch_amplitudes(&self, branches: usize) -> Vec<f64> {
        match branches {
            0 => Vec::new(),
            1 => alloc::vec![1.0],
            2 => alloc::vec![self.transmitted_fraction, self.reflected_fraction],
            t => (0..t)
                .map(|i| {
                    let port = if i % 2 == 0 {
                        self.transmitted_fraction
                    } else {
                        self.reflected_fraction
                    };
                    2.0 * port / t as f64
                })
                .collect(),
        }
    }
}

/// Splits a field into its transmitted and reflected copies.
pub fn split(field: &ComplexField, bs: &BeamSplitterSpec) -> Result<(ComplexField, ComplexField)> {
    bs.validate()?;
    Ok((
        field.scaled(Complex::new(bs.transmitted_fraction, 0.0)),
        field.scaled(Complex::new(bs.reflected_fraction, 0.0)),
    ))
}

/// Coherent superposition `a + b`.
pub fn combine(a: &ComplexField, b: &ComplexField) -> Result<ComplexField> {
    b.ensure_shape(a.rows(), a.cols())?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Ok(ComplexField::from_raw(a.rows(), a.cols(), data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{propagate, PropagationSpec};
    use crate::spectral::NaiveDft;
    use core::f64::consts::PI;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(n: usize, seed: u64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexField::from_fn(n, n, |_, _| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn zero_mask_is_identity() {
        let u = random_field(6, 1);
        assert_eq!(modulate(&u, &PhaseMask::zeros(6, 6)).unwrap(), u);
    }

    #[test]
    fn pi_negates_one_pixel() {
        let u = random_field(4, 2);
        let mut mask = PhaseMask::zeros(4, 4);
        mask.theta_mut()[5] = PI;
        let out = modulate(&u, &mask).unwrap();
        for i in 0..16 {
            if i == 5 {
                assert!((out.data()[i] + u.data()[i]).norm() < 1e-15);
            } else {
                assert_eq!(out.data()[i], u.data()[i]);
            }
        }
    }

    #[test]
    fn modulation_keeps_pixel_magnitudes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = random_field(8, 3);
        let out = modulate(&u, &PhaseMask::random(8, 8, &mut rng)).unwrap();
        for (a, b) in out.data().iter().zip(u.data()) {
            assert!((a.norm() - b.norm()).abs() < 1e-15);
        }
        assert!((out.energy() - u.energy()).abs() / u.energy() < 1e-14);
    }

    #[test]
    fn layer_with_zero_mask_is_plain_propagation() {
        let spec = PropagationSpec::default().with_grid(8, 8);
        let prop = Propagator::new(spec, NaiveDft::new(8, 8)).unwrap();
        let u = random_field(8, 4);
        let layer = diffractive_layer(&u, &PhaseMask::zeros(8, 8), &prop).unwrap();
        assert_eq!(layer, prop.propagate(&u).unwrap());
    }

    #[test]
    fn two_hops_equal_one_double_hop() {
        let spec = PropagationSpec::default().with_grid(16, 16);
        let prop = Propagator::new(spec, NaiveDft::new(16, 16)).unwrap();
        let u = random_field(16, 5);
        let zero = PhaseMask::zeros(16, 16);
        let twice = diffractive_layer(&diffractive_layer(&u, &zero, &prop).unwrap(), &zero, &prop).unwrap();
        let once = propagate(&u, &spec.with_distance(2.0 * spec.layer_distance), NaiveDft::new(16, 16)).unwrap();
        assert!(twice.max_abs_diff(&once) < 1e-9);
    }

    #[test]
    fn nominal_split_halves_amplitude() {
        let u = ComplexField::from_fn(4, 4, |_, _| Complex::new(1.0, 0.0));
        let (t, r) = split(&u, &BeamSplitterSpec::nominal()).unwrap();
        assert!(t.data().iter().chain(r.data()).all(|z| *z == Complex::new(0.5, 0.0)));
    }

    #[test]
    fn degenerate_and_perturbed_splitters() {
        let u = random_field(4, 6);
        let (t, r) = split(&u, &BeamSplitterSpec::new(1.0, 0.0).unwrap()).unwrap();
        assert_eq!(t, u);
        assert!(r.data().iter().all(|z| z.norm() == 0.0));

        let ones = ComplexField::from_fn(2, 2, |_, _| Complex::new(1.0, 0.0));
        let (t, r) = split(&ones, &BeamSplitterSpec::new(0.6, 0.4).unwrap()).unwrap();
        assert!(t.data().iter().all(|z| (z.re - 0.6).abs() < 1e-15));
        assert!(r.data().iter().all(|z| (z.re - 0.4).abs() < 1e-15));
    }

    #[test]
    fn splitter_rejects_out_of_range() {
        assert!(BeamSplitterSpec::new(1.2, 0.0).is_err());
        assert!(BeamSplitterSpec::new(0.5, -0.1).is_err());
    }

    #[test]
    fn branch_amplitudes_generalize() {
        let bs = BeamSplitterSpec::nominal();
        assert_eq!(bs.branch_amplitudes(1), [1.0]);
        assert_eq!(bs.branch_amplitudes(2), [0.5, 0.5]);
        assert_eq!(bs.branch_amplitudes(4), [0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn combine_identities() {
        let a = random_field(4, 7);
        assert_eq!(combine(&a, &ComplexField::zeros(4, 4)).unwrap(), a);
        let neg = a.scaled(Complex::new(-1.0, 0.0));
        assert!(combine(&a, &neg).unwrap().data().iter().all(|z| z.norm() == 0.0));
        let (t, r) = split(&a, &BeamSplitterSpec::nominal()).unwrap();
        assert_eq!(combine(&t, &r).unwrap(), a);
        assert!(combine(&a, &ComplexField::zeros(2, 2)).is_err());
    }

    #[test]
    fn wrap_phase_range() {
        for t in [-7.0, -TAU, -0.0, 0.0, 1.0, TAU, 3.0 * TAU + 0.5, 1e6] {
            let w = wrap_phase(t);
            assert!((0.0..TAU).contains(&w), "{t} -> {w}");
            assert!(((t - w) / TAU - ((t - w) / TAU).round()).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn modulation_composes(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_field(5, seed);
            let a = PhaseMask::from_fn(5, 5, |_, _| rng.random_range(-10.0..10.0));
            let b = PhaseMask::from_fn(5, 5, |_, _| rng.random_range(-10.0..10.0));
            let sum = PhaseMask::new(5, 5, a.theta().iter().zip(b.theta()).map(|(x, y)| x + y).collect()).unwrap();
            let chained = modulate(&modulate(&u, &a).unwrap(), &b).unwrap();
            prop_assert!(chained.max_abs_diff(&modulate(&u, &sum).unwrap()) < 1e-12);
        }

        #[test]
        fn phase_wrap_is_invisible(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_field(5, seed ^ 1);
            let a = PhaseMask::from_fn(5, 5, |_, _| rng.random_range(0.0..TAU));
            let shifted = PhaseMask::new(5, 5, a.theta().iter().map(|t| t + TAU).collect()).unwrap();
            prop_assert!(modulate(&u, &a).unwrap().max_abs_diff(&modulate(&u, &shifted).unwrap()) < 1e-12);
            prop_assert!(modulate(&u, &a).unwrap().max_abs_diff(&modulate(&u, &a.wrapped()).unwrap()) < 1e-12);
        }
    }
}

//! Noise injection for robustness evaluation: detector Gaussian noise,
//! phase-mask fabrication error and beam-splitter imbalance.
//!
//! Randomness comes from ChaCha8 seeded by [`NoiseSpec::seed`]. Stream 0 drives
//! the device perturbation; sample `i` of an evaluation draws its detector
//! noise from stream `i + 1`, so results do not depend on evaluation order.

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::field::{ComplexField, Propagator};
use crate::network::{CompiledModel, MultiTaskD2NN};
use crate::optics::{wrap_phase, BeamSplitterSpec};
use crate::readout::{decide_values, DetectorReading, LabelCodec};
use crate::spectral::SpectralEngine;
use crate::{Error, Result};

/// Largest splitter imbalance accepted.
pub const MAX_SPLITTER_EPSILON: f64 = 0.1;

/// Where detector noise enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum DetectorNoiseMode {
    /// Every pixel of the detector plane, before region summation.
    #[default]
    PerPixel,
    /// Every region sum, after readout.
    PerRegion,
}

/// One point of a robustness sweep.
///
/// `detector_sigma` and `detector_mu` are fractions of the mean clean signal
/// of each sample (mean pixel intensity, or mean region sum in per-region
/// mode). `device_sigma` is in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct NoiseSpec {
    pub detector_sigma: f64,
    pub detector_mu: f64,
    pub device_sigma: f64,
    pub splitter_epsilon: f64,
    pub seed: u64,
    pub mode: DetectorNoiseMode,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("detector_sigma", self.detector_sigma), ("device_sigma", self.device_sigma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidNoise(format!("{name} must be finite and >= 0 (got {v})")));
            }
        }
        if !self.detector_mu.is_finite() {
            return Err(Error::InvalidNoise("detector_mu must be finite".into()));
        }
        if !(-MAX_SPLITTER_EPSILON..=MAX_SPLITTER_EPSILON).contains(&self.splitter_epsilon) {
            return Err(Error::InvalidNoise(format!(
                "splitter_epsilon must lie in [-{MAX_SPLITTER_EPSILON}, {MAX_SPLITTER_EPSILON}] (got {})",
                self.splitter_epsilon
            )));
        }
        Ok(())
    }

    /// True when the optical path (masks and splitter) is untouched.
    pub fn device_is_clean(&self) -> bool {
        self.device_sigma == 0.0 && self.splitter_epsilon == 0.0
    }

    pub fn detector_is_clean(&self) -> bool {
        self.detector_sigma == 0.0 && self.detector_mu == 0.0
    }

    /// RNG for `stream` of this spec.
    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// RNG used for the detector noise of sample `index`.
    pub fn sample_rng(&self, index: u64) -> ChaCha8Rng {
        self.rng(index.wrapping_add(1))
    }
}

fn add_gaussian(values: &mut [f64], sigma_rel: f64, mu_rel: f64, rng: &mut ChaCha8Rng) {
    if sigma_rel == 0.0 && mu_rel == 0.0 {
        return;
    }
    let level = values.iter().sum::<f64>() / values.len().max(1) as f64;
    let mu = mu_rel * level;
    let sigma = sigma_rel * level;
    if sigma == 0.0 {
        values.iter_mut().for_each(|v| *v += mu);
        return;
    }
    let normal = Normal::new(mu, sigma).expect("sigma is finite and positive");
    values.iter_mut().for_each(|v| *v += normal.sample(rng));
}

/// Adds `N(μ·s, (σ·s)²)` to every pixel, `s` being the image's mean intensity.
pub fn apply_detector_noise(image: &[f64], spec: &NoiseSpec) -> Result<Vec<f64>> {
    apply_detector_noise_with(image, spec, &mut spec.rng(1))
}

pub fn apply_detector_noise_with(image: &[f64], spec: &NoiseSpec, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut out = image.to_vec();
    add_gaussian(&mut out, spec.detector_sigma, spec.detector_mu, rng);
    Ok(out)
}

/// Per-region variant: the noise is added to the region sums.
pub fn apply_region_noise_with(reading: &DetectorReading, spec: &NoiseSpec, rng: &mut ChaCha8Rng) -> Result<DetectorReading> {
    spec.validate()?;
    let mut values = reading.values.clone();
    add_gaussian(&mut values, spec.detector_sigma, spec.detector_mu, rng);
    Ok(DetectorReading { values })
}

/// Adds `N(0, σ²)` radians to every phase and wraps into `[0, 2π)`.
/// With `σ = 0` the model is returned untouched.
pub fn apply_phase_noise(model: &MultiTaskD2NN, spec: &NoiseSpec) -> Result<MultiTaskD2NN> {
    apply_phase_noise_with(model, spec, &mut spec.rng(0))
}

pub fn apply_phase_noise_with(model: &MultiTaskD2NN, spec: &NoiseSpec, rng: &mut ChaCha8Rng) -> Result<MultiTaskD2NN> {
    spec.validate()?;
    let mut out = model.clone();
    if spec.device_sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, spec.device_sigma).expect("sigma is finite and positive");
    for mask in out.masks_mut() {
        for t in mask.theta_mut() {
            *t = wrap_phase(*t + normal.sample(rng));
        }
    }
    Ok(out)
}

/// Shifts power between the two splitter ports: `(t + ε, r − ε)`.
pub fn apply_splitter_noise(bs: &BeamSplitterSpec, spec: &NoiseSpec) -> Result<BeamSplitterSpec> {
    spec.validate()?;
    if spec.splitter_epsilon == 0.0 {
        return Ok(*bs);
    }
    BeamSplitterSpec::new(
        bs.transmitted_fraction + spec.splitter_epsilon,
        bs.reflected_fraction - spec.splitter_epsilon,
    )
}

/// Phase noise then splitter noise, drawing from stream 0.
pub fn perturb_model(model: &MultiTaskD2NN, spec: &NoiseSpec) -> Result<MultiTaskD2NN> {
    let mut out = apply_phase_noise(model, spec)?;
    out.splitter = apply_splitter_noise(&model.splitter, spec)?;
    Ok(out)
}

/// Detector noise, readout and decision for an already computed clean
/// detector-plane intensity.
pub fn noisy_decision(
    compiled: &CompiledModel<'_>,
    image: &[f64],
    spec: &NoiseSpec,
    codec: &LabelCodec,
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    let reading = match spec.mode {
        DetectorNoiseMode::PerPixel => compiled.read_image(&apply_detector_noise_with(image, spec, rng)?),
        DetectorNoiseMode::PerRegion => apply_region_noise_with(&compiled.read_image(image), spec, rng)?,
    };
    decide_values(&reading.values, codec)
}

/// Full noisy forward pass of sample `index`: perturbed masks and splitter,
/// clean propagation, detector noise, readout, decision.
pub fn noisy_inference<E: SpectralEngine>(
    model: &MultiTaskD2NN,
    propagator: &Propagator<E>,
    input: &ComplexField,
    spec: &NoiseSpec,
    codec: &LabelCodec,
    index: u64,
) -> Result<usize> {
    let perturbed = perturb_model(model, spec)?;
    let compiled = CompiledModel::new(&perturbed)?;
    let image = compiled.intensity(propagator, input)?;
    noisy_decision(&compiled, &image, spec, codec, &mut spec.sample_rng(index))
}

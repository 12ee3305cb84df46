//! Simulation and training core for multi-task diffractive deep neural
//! networks (D²NNs).
//!
//! The crate is `no_std` (it needs `alloc`). Free-space propagation is
//! expressed against the [`SpectralEngine`] trait so that hosts can plug in a
//! fast FFT; [`NaiveDft`] is a portable reference engine used for small grids
//! and for the direct-convolution oracle.
//!
//! Module map:
//!
//! * [`field`]: complex fields, propagation geometry, Fresnel transfer
//!   function, FFT propagation and the direct-convolution oracle.
//! * [`optics`]: phase masks, modulation, diffractive layers, beam splitter.
//! * [`network`]: the shared-trunk / multi-branch forward model.
//! * [`readout`]: detector regions, label codecs and decision rules.
//! * [`train`]: losses, adjoint gradients, Adam and the printed update rule.
//! * [`noise`]: detector, device and splitter noise injection.
//! * [`encode`]: mapping 8-bit images onto the input plane.
//! * [`metrics`]: accuracy-hardware product.
#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod encode;
mod error;
pub mod field;
pub mod metrics;
pub mod network;
pub mod noise;
pub mod optics;
pub mod readout;
pub mod spectral;
pub mod train;

pub use error::{Error, Result};
pub use field::{propagate, propagate_direct, transfer_function, ComplexField, PropagationSpec, Propagator};
pub use network::{build_model, forward, forward_trace, ArchConfig, CompiledModel, ForwardTrace, MultiTaskD2NN};
pub use optics::{combine, diffractive_layer, modulate, split, BeamSplitterSpec, PhaseMask};
pub use readout::{decide, encode_target, read, DetectorLayout, DetectorReading, LabelCodec, Polarity, Region};
pub use encode::{encode_input, EncodingMode, InputEncoding};
pub use metrics::acc_hw;
pub use noise::{apply_detector_noise, apply_phase_noise, apply_splitter_noise, noisy_inference, NoiseSpec};
pub use spectral::{NaiveDft, SpectralEngine};
pub use train::{adam_step, backward, paper_rule_step, task_loss, total_loss, AdamState, GradientSet, TrainConfig, UpdateRule};

/// Double-precision complex amplitude.
pub type Complex = num_complex::Complex64;

//! Host-side tooling for multi-task diffractive networks: an FFT engine,
//! IDX datasets, checkpoints, parallel training, noise sweeps, exports and
//! the command implementations behind the `d2nn` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod data;
mod error;
pub mod export;
pub mod fft;
pub mod report;
pub mod sweep;
pub mod trainer;

pub use d2nn_core as core;
pub use error::{Error, Result};
pub use fft::RustFftEngine;

//! Low-latency monaural speech enhancement on low-resolution complex
//! spectrograms via complex linear coding (CLC).
//!
//! The signal path: a square-root-Hann analysis bank turns 24 kHz audio into a
//! 48-band complex spectrogram at a 2 ms hop; per band, a small stack of
//! complex filter coefficients predicted by a neural network (or fitted by a
//! least-squares oracle) combines neighbouring frames into an enhanced
//! spectrogram, which the matching synthesis bank turns back into audio. All
//! numeric modules are generic over the scalar type ([`num::Real`], `f32` or
//! `f64`); the concrete aliases below pin the default precision used by the
//! CLI and the training stack.

pub mod clc;
pub mod cli;
pub mod data;
pub mod error;
pub mod filterbank;
mod linalg;
pub mod lpc;
pub mod metrics;
pub mod model;
pub mod num;

pub use error::{Error, ErrorCategory, Result};
pub use num_complex::Complex;

/// Default scalar type for the CLI and training stack.
pub type Sample = f64;
/// Default complex scalar.
pub type CSample = num_complex::Complex<Sample>;
/// Waveform at default precision.
pub type Waveform64 = filterbank::Waveform<Sample>;
/// Spectrogram at default precision.
pub type Spectrogram64 = filterbank::Spectrogram<Sample>;
/// Filter bank at default precision.
pub type Filterbank64 = filterbank::Filterbank<Sample>;

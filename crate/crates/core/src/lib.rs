//! Target-matching generative speech enhancement.
//!
//! The crate is organised bottom-up: [`dsp`] turns waveforms into compressed
//! two-channel spectrograms and back, [`schedules`] and [`path`] define the
//! Gaussian probability path between clean and noisy spectrograms,
//! [`predictor`] holds clean-target estimators and their training loop, and
//! [`sampler`] runs the Euler ODE that transports a noisy spectrogram to its
//! clean estimate.

pub mod dsp;
pub mod error;
pub mod losses;
pub mod par;
pub mod path;
pub mod pipeline;
pub mod predictor;
pub mod rng;
pub mod sampler;
pub mod schedules;
pub mod studies;
pub mod synth;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;

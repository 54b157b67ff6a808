//! Conditional score-based diffusion for single-channel speech enhancement
//! in the compressed complex STFT domain.

pub mod audio;
pub mod error;
pub mod metrics;
pub mod rng;
pub mod sampler;
pub mod score;
pub mod sde;
pub mod spectral;
pub mod spectrogram;

pub use error::{Error, ErrorClass, Result};
pub use num_complex;

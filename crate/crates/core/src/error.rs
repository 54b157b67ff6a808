use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input too short: need at least {min} samples, got {actual}")]
    InputTooShort { min: usize, actual: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("length mismatch: {left} vs {right} samples")]
    LengthMismatch { left: usize, right: usize },
    #[error("spectrogram is already compressed")]
    AlreadyCompressed,
    #[error("spectrogram is not compressed")]
    NotCompressed,
    #[error("istft requires a decompressed spectrogram")]
    CompressedInput,
    #[error("inconsistent frame geometry: {0}")]
    FrameGeometry(String),
    #[error("process time {t} outside [{lo}, {hi}]")]
    TimeOutOfRange { t: f64, lo: f64, hi: f64 },
    #[error("sigma(t) = {sigma:e} at t = {t} is below the guard threshold")]
    SigmaTooSmall { t: f64, sigma: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("solver diverged (non-finite state) at t = {t}; last finite state at t = {last_valid_t}")]
    Diverged { t: f64, last_valid_t: f64 },
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("non-finite training loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },
    #[error("zero reference signal")]
    ZeroReference,
    #[error("zero {0} signal")]
    ZeroSignal(&'static str),
    #[error("unsupported WAV file {path}: {reason}")]
    WavFormat { path: PathBuf, reason: String },
    #[error("WAV I/O error on {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("weights file: {0}")]
    Weights(String),
    #[error("weights format version mismatch: file has version {found}, this build reads version {expected}")]
    WeightsVersion { found: u32, expected: u32 },
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Diverged { .. }
            | Error::StepUnderflow { .. }
            | Error::NonFiniteLoss { .. }
            | Error::SigmaTooSmall { .. } => ErrorClass::Numerical,
            Error::InvalidParam(_) | Error::Config(_) => ErrorClass::Usage,
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

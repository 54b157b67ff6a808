use std::path::{Path, PathBuf};

use ouve_core::audio::{read_wav, write_wav};
use ouve_core::sampler::{enhance, SolveStats};
use ouve_core::score::{load_weights, AnalyticOracle, ScoreModel, TinyScoreNet};
use ouve_core::spectral::{compress, Stft, Waveform};
use ouve_core::{Error, Result};

use crate::RunConfig;

/// Where the score comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSource {
    /// Trained network weights.
    Weights(PathBuf),
    /// The analytic score built from the clean reference at this path. This
    /// is a validation mode, not an enhancement method.
    Oracle(PathBuf),
}

impl ModelSource {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Weights(_) => "net",
            Self::Oracle(_) => "oracle",
        }
    }
}

/// Loads a network, or builds the oracle for a clean reference of the same
/// length as `input`.
pub(crate) fn build_model(cfg: &RunConfig, source: &ModelSource, input: &Waveform) -> Result<Box<dyn ScoreModel>> {
    match source {
        ModelSource::Weights(path) => Ok(Box::new(load_net(cfg, path)?)),
        ModelSource::Oracle(path) => oracle_for(cfg, &read_wav(path)?, input),
    }
}

pub(crate) fn load_net(cfg: &RunConfig, path: &Path) -> Result<TinyScoreNet> {
    load_weights(path, cfg.sde)
}

pub(crate) fn oracle_for(cfg: &RunConfig, clean: &Waveform, input: &Waveform) -> Result<Box<dyn ScoreModel>> {
    if clean.len() != input.len() {
        return Err(Error::LengthMismatch {
            left: clean.len(),
            right: input.len(),
        });
    }
    let x0 = compress(&Stft::new().stft(clean)?, &cfg.transform)?;
    Ok(Box::new(AnalyticOracle::new(x0, cfg.sde)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceReport {
    /// `net` or `oracle`.
    pub model: &'static str,
    pub stats: SolveStats,
    pub samples: usize,
    /// Output samples clipped when writing 16-bit PCM.
    pub clipped: usize,
}

/// Enhances `input` with the configured sampler and writes `output`.
pub fn cmd_enhance(cfg: &RunConfig, input: &Path, source: &ModelSource, output: &Path) -> Result<EnhanceReport> {
    let y = read_wav(input)?;
    let model = build_model(cfg, source, &y)?;
    let (x, stats) = enhance(&y, model.as_ref(), &cfg.sampler, &cfg.sde, &cfg.transform)?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let clipped = write_wav(output, &x)?;
    Ok(EnhanceReport {
        model: source.label(),
        stats,
        samples: x.len(),
        clipped,
    })
}

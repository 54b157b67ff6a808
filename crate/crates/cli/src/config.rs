//! Run configuration: one flat set of `key = value` settings.
//!
//! Values are layered. Built-in defaults come first, then `OUVE_SEED` from
//! the environment, then the config file, then command-line flags.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ouve_core::sampler::{SamplerConfig, SamplerKind};
use ouve_core::score::TrainConfig;
use ouve_core::sde::{NoiseConvention, SdeParams};
use ouve_core::spectral::TransformParams;
use ouve_core::{Error, Result};

/// Environment variable consulted for the seed when no file or flag sets it.
pub const SEED_ENV: &str = "OUVE_SEED";

/// Every recognised key, in rendering order.
pub const KEYS: &[&str] = &[
    "gamma",
    "sigma_min",
    "sigma_max",
    "t_horizon",
    "t_eps",
    "noise_convention",
    "alpha",
    "beta",
    "sampler",
    "n_steps",
    "corrector_steps",
    "snr_r",
    "atol",
    "rtol",
    "ode_half_factor",
    "seed",
    "lr",
    "batch_size",
    "crop_frames",
    "positions_per_item",
    "steps",
    "weights",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub sde: SdeParams,
    pub transform: TransformParams,
    /// Sampler settings; `sampler.seed` is the root seed of the run.
    pub sampler: SamplerConfig,
    pub train: TrainConfig,
    /// Default weights file for enhance and bench.
    pub weights: Option<PathBuf>,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid value '{value}' for {key} (expected true or false)"))),
    }
}

impl RunConfig {
    pub fn seed(&self) -> u64 {
        self.sampler.seed
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "gamma" => self.sde.gamma = parse(key, value)?,
            "sigma_min" => self.sde.sigma_min = parse(key, value)?,
            "sigma_max" => self.sde.sigma_max = parse(key, value)?,
            "t_horizon" => self.sde.t_horizon = parse(key, value)?,
            "t_eps" => self.sde.t_eps = parse(key, value)?,
            "noise_convention" => {
                self.sde.noise = NoiseConvention::parse(value).map_err(|e| Error::Config(e.to_string()))?
            }
            "alpha" => self.transform.alpha = parse(key, value)?,
            "beta" => self.transform.beta = parse(key, value)?,
            "sampler" => self.sampler.kind = SamplerKind::parse(value).map_err(|e| Error::Config(e.to_string()))?,
            "n_steps" => self.sampler.n_steps = parse(key, value)?,
            "corrector_steps" => self.sampler.corrector_steps = parse(key, value)?,
            "snr_r" => self.sampler.r = parse(key, value)?,
            "atol" => self.sampler.atol = parse(key, value)?,
            "rtol" => self.sampler.rtol = parse(key, value)?,
            "ode_half_factor" => self.sampler.ode_half_factor = parse_bool(key, value)?,
            "seed" => self.sampler.seed = parse(key, value)?,
            "lr" => self.train.lr = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "crop_frames" => self.train.crop_frames = parse(key, value)?,
            "positions_per_item" => self.train.positions_per_item = parse(key, value)?,
            "steps" => self.train.steps = parse(key, value)?,
            "weights" => self.weights = (!value.is_empty()).then(|| PathBuf::from(value)),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value', got '{line}'", i + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, e.to_string().trim_start_matches("config: "))))?;
        }
        Ok(())
    }

    /// Applies whitespace-separated `key=value` tokens, as used by bench grids.
    pub fn apply_tokens(&mut self, line: &str) -> Result<()> {
        for tok in line.split_whitespace() {
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got '{tok}'")))?;
            self.set(key, value)?;
        }
        Ok(())
    }

    /// Defaults, then `env_seed`, then the file, then `overrides` in order.
    pub fn resolve(file: Option<&Path>, env_seed: Option<&str>, overrides: &[(&str, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(s) = env_seed {
            cfg.set("seed", s)
                .map_err(|_| Error::Config(format!("{SEED_ENV}='{s}' is not an unsigned integer")))?;
        }
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        for (key, value) in overrides {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |e: Error| Error::Config(e.to_string());
        self.sde.validate().map_err(usage)?;
        self.transform.validate().map_err(usage)?;
        self.sampler.validate().map_err(usage)?;
        if self.train.batch_size == 0 || self.train.crop_frames == 0 || self.train.positions_per_item == 0 {
            return Err(Error::Config("batch_size, crop_frames and positions_per_item must be positive".into()));
        }
        if !(self.train.lr >= 0.0 && self.train.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be non-negative, got {}", self.train.lr)));
        }
        Ok(())
    }

    /// The textual value of `key`.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "gamma" => self.sde.gamma.to_string(),
            "sigma_min" => self.sde.sigma_min.to_string(),
            "sigma_max" => self.sde.sigma_max.to_string(),
            "t_horizon" => self.sde.t_horizon.to_string(),
            "t_eps" => self.sde.t_eps.to_string(),
            "noise_convention" => self.sde.noise.as_str().to_string(),
            "alpha" => self.transform.alpha.to_string(),
            "beta" => self.transform.beta.to_string(),
            "sampler" => self.sampler.kind.as_str().to_string(),
            "n_steps" => self.sampler.n_steps.to_string(),
            "corrector_steps" => self.sampler.corrector_steps.to_string(),
            "snr_r" => self.sampler.r.to_string(),
            "atol" => self.sampler.atol.to_string(),
            "rtol" => self.sampler.rtol.to_string(),
            "ode_half_factor" => self.sampler.ode_half_factor.to_string(),
            "seed" => self.sampler.seed.to_string(),
            "lr" => self.train.lr.to_string(),
            "batch_size" => self.train.batch_size.to_string(),
            "crop_frames" => self.train.crop_frames.to_string(),
            "positions_per_item" => self.train.positions_per_item.to_string(),
            "steps" => self.train.steps.to_string(),
            "weights" => self.weights.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            _ => return None,
        })
    }

    /// The full configuration in file format; parsing it back reproduces `self`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).unwrap_or_default());
        }
        out
    }
}

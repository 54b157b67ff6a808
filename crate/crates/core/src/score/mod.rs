//! Score models and the denoising score-matching objective.

mod net;
mod oracle;
mod train;
mod weights;

use std::sync::atomic::{AtomicU64, Ordering};

pub use net::{Activation, TinyScoreNet, EMBED_DIM, PATCH_WIDTH};
pub use oracle::{AnalyticOracle, ZeroScore};
pub use train::{gradient_check, loss_and_gradient, train, training_step, Adam, LossSample, TrainConfig, TrainReport};
pub use weights::{load_weights, save_weights, WEIGHTS_VERSION};

use crate::error::{Error, Result};
use crate::sde::{self, SdeParams};
use crate::spectrogram::ComplexSpectrogram;

/// Smallest `sigma(t)` at which the score target is formed.
pub const SIGMA_GUARD: f64 = 1e-8;

/// Maps `(x_t, y, t)` to an estimate of the conditional score.
///
/// Every call to [`ScoreModel::evaluate`] counts as one function evaluation.
pub trait ScoreModel: Send + Sync {
    fn evaluate(&self, xt: &ComplexSpectrogram, y: &ComplexSpectrogram, t: f64) -> Result<ComplexSpectrogram>;

    /// Number of evaluations so far.
    fn nfe(&self) -> u64;
}

/// Monotone evaluation counter shared by the model implementations.
#[derive(Debug, Default)]
pub struct NfeCounter(AtomicU64);

impl NfeCounter {
    pub fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

impl Clone for NfeCounter {
    fn clone(&self) -> Self {
        Self(AtomicU64::new(self.get()))
    }
}

/// Sigma at `t`, rejected when below [`SIGMA_GUARD`].
pub(crate) fn guarded_sigma(t: f64, p: &SdeParams) -> Result<f64> {
    let s = sde::sigma(t, p)?;
    if !(s >= SIGMA_GUARD) {
        return Err(Error::SigmaTooSmall { t, sigma: s });
    }
    Ok(s)
}

/// Denoising score-matching loss for one `(x0, y, t, z)` draw.
///
/// Forms `x_t = mean + sigma z`, evaluates the model and returns the mean over
/// all real components of `(s + z / sigma)^2`.
pub fn dsm_loss(
    model: &dyn ScoreModel,
    x0: &ComplexSpectrogram,
    y: &ComplexSpectrogram,
    t: f64,
    z: &ComplexSpectrogram,
    p: &SdeParams,
) -> Result<f64> {
    let sigma = guarded_sigma(t, p)?;
    let mut xt = sde::mean(x0, y, t, p)?;
    xt.axpy(sigma, z)?;
    let s = model.evaluate(&xt, y, t)?;
    let inv = 1.0 / sigma;
    let sum: f64 = s
        .data()
        .iter()
        .zip(z.data())
        .map(|(sv, zv)| (sv + zv * inv).norm_sqr())
        .sum();
    Ok(sum / (2 * s.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;
    use crate::sde::sample_complex_gaussian;
    use num_complex::Complex64;
    use rand::Rng as _;

    fn random_grid(freqs: usize, frames: usize, rng: &mut crate::rng::Rng) -> ComplexSpectrogram {
        ComplexSpectrogram::from_fn(freqs, frames, |_, _| {
            Complex64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))
        })
    }

    #[test]
    fn oracle_loss_vanishes() {
        let p = SdeParams::default();
        let mut rng = from_seed(10);
        let x0 = random_grid(6, 7, &mut rng);
        let y = random_grid(6, 7, &mut rng);
        let oracle = AnalyticOracle::new(x0.clone(), p);
        for _ in 0..20 {
            let t = rng.random_range(p.t_eps..p.t_horizon);
            let z = sample_complex_gaussian(6, 7, 1.0, p.noise, &mut rng);
            assert!(dsm_loss(&oracle, &x0, &y, t, &z, &p).unwrap() <= 1e-10);
        }
        assert_eq!(oracle.nfe(), 20);
    }

    #[test]
    fn zero_model_loss_is_noise_energy() {
        let p = SdeParams::default();
        let mut rng = from_seed(11);
        let x0 = random_grid(3, 4, &mut rng);
        let y = random_grid(3, 4, &mut rng);
        let z = sample_complex_gaussian(3, 4, 1.0, p.noise, &mut rng);
        let t = 0.4;
        let sigma = sde::sigma(t, &p).unwrap();
        let got = dsm_loss(&ZeroScore::default(), &x0, &y, t, &z, &p).unwrap();
        let want = z.norm_sqr() / (sigma * sigma) / (2 * z.len()) as f64;
        assert!((got - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn guard_rejects_tiny_sigma() {
        let p = SdeParams::default();
        let g = ComplexSpectrogram::zeros(1, 1);
        assert!(matches!(
            dsm_loss(&ZeroScore::default(), &g, &g, 0.0, &g, &p),
            Err(Error::SigmaTooSmall { .. })
        ));
    }
}

//! The forward process: an Ornstein-Uhlenbeck drift pulling the state from
//! the clean spectrogram towards the corrupted one, driven by a noise
//! schedule that grows geometrically between `sigma_min` and `sigma_max`.
//!
//! ```text
//! dx = gamma (y - x) dt + g(t) dw
//! g(t) = sigma_min (sigma_max / sigma_min)^t sqrt(2 ln(sigma_max / sigma_min))
//! ```
//!
//! Given `x0` and `y` the state at time `t` is complex Gaussian with
//! mean `e^{-gamma t} x0 + (1 - e^{-gamma t}) y` and variance `sigma(t)^2`.

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::spectral::{self, TransformParams, Waveform};
use crate::spectrogram::ComplexSpectrogram;

/// Tolerance on process-time range checks, absorbing accumulated rounding
/// of solver time grids.
const TIME_SLACK: f64 = 1e-12;

/// Reported SNR when the noise component vanishes.
pub const SNR_CAP_DB: f64 = 99.0;

/// How the variance of a circularly-symmetric complex Gaussian is split
/// between its real and imaginary parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseConvention {
    /// Each part has variance 1/2; `E|z|^2 = 1`.
    #[default]
    SplitHalf,
    /// Each part has unit variance; `E|z|^2 = 2`.
    PerPartUnit,
}

impl NoiseConvention {
    /// Standard deviation of each real component of a unit draw.
    pub fn part_std(self) -> f64 {
        match self {
            NoiseConvention::SplitHalf => std::f64::consts::FRAC_1_SQRT_2,
            NoiseConvention::PerPartUnit => 1.0,
        }
    }

    /// `E|z|^2` of a unit draw.
    pub fn total_variance(self) -> f64 {
        match self {
            NoiseConvention::SplitHalf => 1.0,
            NoiseConvention::PerPartUnit => 2.0,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "split-half" => Ok(Self::SplitHalf),
            "per-part-unit" => Ok(Self::PerPartUnit),
            other => Err(Error::InvalidParam(format!(
                "unknown complex noise convention '{other}' (expected split-half or per-part-unit)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::SplitHalf => "split-half",
            Self::PerPartUnit => "per-part-unit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeParams {
    /// Stiffness: rate at which the mean moves from `x0` to `y`.
    pub gamma: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Process horizon `T`.
    pub t_horizon: f64,
    /// Smallest process time at which the score is evaluated.
    pub t_eps: f64,
    pub noise: NoiseConvention,
}

impl Default for SdeParams {
    fn default() -> Self {
        Self {
            gamma: 1.5,
            sigma_min: 0.05,
            sigma_max: 0.5,
            t_horizon: 1.0,
            t_eps: 0.03,
            noise: NoiseConvention::SplitHalf,
        }
    }
}

impl SdeParams {
    pub fn with_gamma(self, gamma: f64) -> Self {
        Self { gamma, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParam(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min < self.sigma_max && self.sigma_max.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "need 0 < sigma_min < sigma_max, got {} and {}",
                self.sigma_min, self.sigma_max
            )));
        }
        if !(self.t_eps > 0.0 && self.t_eps < self.t_horizon && self.t_horizon.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "need 0 < t_eps < T, got {} and {}",
                self.t_eps, self.t_horizon
            )));
        }
        Ok(())
    }

    fn log_ratio(&self) -> f64 {
        (self.sigma_max / self.sigma_min).ln()
    }

    pub(crate) fn check_time(&self, t: f64, lo: f64) -> Result<()> {
        if !(t >= lo - TIME_SLACK && t <= self.t_horizon + TIME_SLACK) {
            return Err(Error::TimeOutOfRange {
                t,
                lo,
                hi: self.t_horizon,
            });
        }
        Ok(())
    }
}

/// `gamma (y - x)`, elementwise.
pub fn drift(x: &ComplexSpectrogram, y: &ComplexSpectrogram, p: &SdeParams) -> Result<ComplexSpectrogram> {
    let gamma = p.gamma;
    x.zip_map(y, |xv, yv| (yv - xv) * gamma)
}

/// Diffusion coefficient `g(t)`.
pub fn diffusion_coeff(t: f64, p: &SdeParams) -> Result<f64> {
    p.check_time(t, 0.0)?;
    Ok(diffusion_coeff_unchecked(t, p))
}

pub(crate) fn diffusion_coeff_unchecked(t: f64, p: &SdeParams) -> f64 {
    let lr = p.log_ratio();
    p.sigma_min * (t * lr).exp() * (2.0 * lr).sqrt()
}

/// Weight `e^{-gamma t}` carried by `x0` in the process mean.
pub fn clean_weight(t: f64, p: &SdeParams) -> f64 {
    (-p.gamma * t).exp()
}

/// Closed-form process mean at time `t`.
pub fn mean(x0: &ComplexSpectrogram, y: &ComplexSpectrogram, t: f64, p: &SdeParams) -> Result<ComplexSpectrogram> {
    p.check_time(t, 0.0)?;
    mean_unchecked(x0, y, t, p)
}

pub(crate) fn mean_unchecked(
    x0: &ComplexSpectrogram,
    y: &ComplexSpectrogram,
    t: f64,
    p: &SdeParams,
) -> Result<ComplexSpectrogram> {
    let w = clean_weight(t, p);
    let v = -(-p.gamma * t).exp_m1();
    x0.zip_map(y, |a, b| a * w + b * v)
}

/// Closed-form process variance `sigma(t)^2`.
pub fn variance(t: f64, p: &SdeParams) -> Result<f64> {
    p.check_time(t, 0.0)?;
    Ok(variance_unchecked(t, p))
}

pub(crate) fn variance_unchecked(t: f64, p: &SdeParams) -> f64 {
    let lr = p.log_ratio();
    // r^{2t} - e^{-2 gamma t} = e^{-2 gamma t} (e^{2t (ln r + gamma)} - 1)
    let diff = (-2.0 * p.gamma * t).exp() * (2.0 * t * (lr + p.gamma)).exp_m1();
    p.sigma_min * p.sigma_min * diff * lr / (p.gamma + lr)
}

/// Closed-form process standard deviation `sigma(t)`.
pub fn sigma(t: f64, p: &SdeParams) -> Result<f64> {
    variance(t, p).map(f64::sqrt)
}

pub(crate) fn sigma_unchecked(t: f64, p: &SdeParams) -> f64 {
    variance_unchecked(t, p).sqrt()
}

/// Circularly-symmetric complex Gaussian field with `E|z|^2 = scale^2` times
/// the convention's total variance.
pub fn sample_complex_gaussian(
    freqs: usize,
    frames: usize,
    scale: f64,
    convention: NoiseConvention,
    rng: &mut Rng,
) -> ComplexSpectrogram {
    let k = scale * convention.part_std();
    ComplexSpectrogram::from_fn(freqs, frames, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * k, im * k)
    })
}

/// Draws `x_t = mean(x0, y, t) + sigma(t) z` and returns it with `z`.
pub fn perturb(
    x0: &ComplexSpectrogram,
    y: &ComplexSpectrogram,
    t: f64,
    p: &SdeParams,
    rng: &mut Rng,
) -> Result<(ComplexSpectrogram, ComplexSpectrogram)> {
    p.check_time(t, p.t_eps)?;
    let mu = mean_unchecked(x0, y, t, p)?;
    let z = sample_complex_gaussian(x0.freqs(), x0.frames(), 1.0, p.noise, rng);
    let mut xt = mu;
    xt.axpy(sigma_unchecked(t, p), &z)?;
    Ok((xt, z))
}

/// Initial state of the reverse process: `y + sigma(T) z`.
pub fn sample_prior(y: &ComplexSpectrogram, p: &SdeParams, rng: &mut Rng) -> ComplexSpectrogram {
    let z = sample_complex_gaussian(y.freqs(), y.frames(), 1.0, p.noise, rng);
    let s = sigma_unchecked(p.t_horizon, p);
    let mut x = y.clone();
    x.axpy(s, &z).expect("same shape by construction");
    x
}

/// Score of the perturbation kernel, `-(x_t - mean) / sigma(t)^2`.
pub fn kernel_score(
    xt: &ComplexSpectrogram,
    x0: &ComplexSpectrogram,
    y: &ComplexSpectrogram,
    t: f64,
    p: &SdeParams,
) -> Result<ComplexSpectrogram> {
    if t < p.t_eps - TIME_SLACK {
        return Err(Error::TimeOutOfRange {
            t,
            lo: p.t_eps,
            hi: p.t_horizon,
        });
    }
    let var = variance_unchecked(t, p);
    if !(var > 0.0) {
        return Err(Error::SigmaTooSmall { t, sigma: var.sqrt() });
    }
    let mu = mean_unchecked(x0, y, t, p)?;
    let inv = 1.0 / var;
    xt.zip_map(&mu, |a, m| -(a - m) * inv)
}

/// Time-domain SNR of the process mean along `t_grid`.
///
/// The mean is formed in the compressed spectral domain, decompressed and
/// resynthesised; its deviation from the clean waveform is the noise
/// component. At `t = 0` (and whenever the noise power vanishes) the value
/// is capped at [`SNR_CAP_DB`].
pub fn snr_of_mean(
    x0: &Waveform,
    y: &Waveform,
    t_grid: &[f64],
    p: &SdeParams,
    tp: &TransformParams,
) -> Result<Vec<(f64, f64)>> {
    if x0.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x0.len(),
            right: y.len(),
        });
    }
    let engine = spectral::Stft::new();
    let cx = spectral::compress(&engine.stft(x0)?, tp)?;
    let cy = spectral::compress(&engine.stft(y)?, tp)?;
    let p_speech = x0.energy();
    t_grid
        .iter()
        .map(|&t| {
            if t == 0.0 {
                return Ok((t, SNR_CAP_DB));
            }
            let mu = mean(&cx, &cy, t, p)?;
            let m = engine.istft(&spectral::decompress(&mu, tp)?, x0.len())?;
            let p_noise: f64 = m
                .samples()
                .iter()
                .zip(x0.samples())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let snr = if p_noise > 0.0 {
                (10.0 * (p_speech / p_noise).log10()).min(SNR_CAP_DB)
            } else {
                SNR_CAP_DB
            };
            Ok((t, snr))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;

    fn scalar(v: f64) -> ComplexSpectrogram {
        ComplexSpectrogram::filled(1, Complex64::new(v, 0.0))
    }

    /// Straight transcription of the variance formula, without the
    /// cancellation-avoiding rearrangement used by the implementation.
    fn variance_naive(t: f64, p: &SdeParams) -> f64 {
        let r: f64 = p.sigma_max / p.sigma_min;
        p.sigma_min.powi(2) * (r.powf(2.0 * t) - (-2.0 * p.gamma * t).exp()) * r.ln() / (p.gamma + r.ln())
    }

    #[test]
    fn diffusion_coeff_values() {
        let p = SdeParams::default();
        assert!((diffusion_coeff(0.0, &p).unwrap() - 0.107_298_301_314_467).abs() < 1e-14);
        assert!((diffusion_coeff(1.0, &p).unwrap() - 1.072_983_013_144_674).abs() < 1e-13);
        let mut prev = 0.0;
        for i in 0..=100 {
            let g = diffusion_coeff(i as f64 / 100.0, &p).unwrap();
            assert!(g > prev);
            prev = g;
        }
        assert!(matches!(diffusion_coeff(1.5, &p), Err(Error::TimeOutOfRange { .. })));
        assert!(diffusion_coeff(-0.1, &p).is_err());
    }

    #[test]
    fn drift_examples() {
        let p = SdeParams::default();
        let d = drift(&scalar(1.0), &scalar(0.0), &p).unwrap();
        assert_eq!(d.data()[0], Complex64::new(-1.5, 0.0));
        let x = ComplexSpectrogram::filled(3, Complex64::new(0.3, -0.2));
        assert!(drift(&x, &x, &p).unwrap().data().iter().all(|v| *v == Complex64::new(0.0, 0.0)));
        assert!(drift(&x, &scalar(1.0), &p).is_err());
    }

    #[test]
    fn mean_examples() {
        let p = SdeParams::default();
        let x0 = ComplexSpectrogram::filled(2, Complex64::new(0.7, -0.1));
        let y = ComplexSpectrogram::filled(2, Complex64::new(-0.2, 0.4));
        assert_eq!(mean(&x0, &y, 0.0, &p).unwrap(), x0);
        let m = mean(&scalar(1.0), &scalar(0.0), 1.0, &p).unwrap();
        assert!((m.data()[0].re - 0.223_130_160_148_430).abs() < 1e-14);
    }

    #[test]
    fn variance_values() {
        let p = SdeParams::default();
        assert_eq!(sigma(0.0, &p).unwrap(), 0.0);
        // reference values from a 30-digit evaluation
        assert!((variance(1.0, &p).unwrap() - 0.151_307_508_385_531).abs() < 1e-14);
        assert!((sigma(1.0, &p).unwrap() - 0.388_982_658_206_675).abs() < 1e-14);
        assert!((sigma(0.03, &p).unwrap() - 0.018_830_099_937_796).abs() < 1e-14);
        for i in 1..=50 {
            let t = i as f64 / 50.0;
            let a = variance(t, &p).unwrap();
            assert!((a - variance_naive(t, &p)).abs() <= 1e-13 * a.max(1e-3));
        }
    }

    #[test]
    fn variance_matches_its_ode() {
        // d sigma^2 / dt = -2 gamma sigma^2 + g^2, checked by central differences
        let p = SdeParams::default();
        let h = 1e-6;
        for &t in &[0.05, 0.3, 0.7, 0.95] {
            let lhs = (variance_unchecked(t + h, &p) - variance_unchecked(t - h, &p)) / (2.0 * h);
            let g = diffusion_coeff_unchecked(t, &p);
            let rhs = -2.0 * p.gamma * variance_unchecked(t, &p) + g * g;
            assert!((lhs - rhs).abs() < 1e-7 * rhs.abs().max(1.0), "t={t}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn variance_strictly_increasing() {
        let p = SdeParams::default();
        let mut prev = variance(0.0, &p).unwrap();
        for i in 1..=1000 {
            let v = variance(i as f64 / 1000.0, &p).unwrap();
            assert!(v > prev, "not increasing at step {i}");
            prev = v;
        }
    }

    #[test]
    fn zero_scale_noise_is_zero() {
        let mut rng = from_seed(1);
        let z = sample_complex_gaussian(4, 4, 0.0, NoiseConvention::SplitHalf, &mut rng);
        assert!(z.data().iter().all(|c| c.re == 0.0 && c.im == 0.0));
    }

    #[test]
    fn kernel_score_examples() {
        let p = SdeParams::default();
        let x0 = scalar(1.0);
        let y = scalar(0.0);
        let t = 0.6;
        let mu = mean(&x0, &y, t, &p).unwrap();
        let s = kernel_score(&mu, &x0, &y, t, &p).unwrap();
        assert_eq!(s.data()[0], Complex64::new(0.0, 0.0));
        assert!(matches!(kernel_score(&mu, &x0, &y, 0.01, &p), Err(Error::TimeOutOfRange { .. })));

        for convention in [NoiseConvention::SplitHalf, NoiseConvention::PerPartUnit] {
            let p = SdeParams { noise: convention, ..p };
            let mut rng = from_seed(3);
            let (xt, z) = perturb(&x0, &y, t, &p, &mut rng).unwrap();
            let s = kernel_score(&xt, &x0, &y, t, &p).unwrap();
            let sig = sigma(t, &p).unwrap();
            let expect = -z.data()[0] / sig;
            assert!((s.data()[0] - expect).norm() <= 1e-12 * expect.norm().max(1.0));
        }
    }

    #[test]
    fn kernel_score_scalar_value() {
        // mu = 0 and sigma = 0.5: choose gamma so that y = x0 = 0 and find t with sigma(t) = 0.5
        let p = SdeParams {
            sigma_max: 0.8,
            ..SdeParams::default()
        };
        let mut lo = 0.0;
        let mut hi = 1.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if sigma_unchecked(mid, &p) < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        let s = kernel_score(&scalar(1.0), &scalar(0.0), &scalar(0.0), t, &p).unwrap();
        assert!((s.data()[0].re + 4.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_schedule_prior_is_y() {
        let p = SdeParams {
            sigma_max: 0.05,
            ..SdeParams::default()
        };
        let y = ComplexSpectrogram::filled(5, Complex64::new(0.25, -0.5));
        let x = sample_prior(&y, &p, &mut from_seed(2));
        assert_eq!(x, y);
    }

    #[test]
    fn prior_mismatch_is_exponential() {
        let p = SdeParams::default();
        let x0 = ComplexSpectrogram::from_fn(3, 3, |k, t| Complex64::new(k as f64 * 0.1, t as f64 * -0.2));
        let y = ComplexSpectrogram::from_fn(3, 3, |k, t| Complex64::new((k + t) as f64 * 0.05, 0.3));
        let mu = mean(&x0, &y, p.t_horizon, &p).unwrap();
        let gap = mu.zip_map(&y, |a, b| a - b).unwrap().norm();
        let full = x0.zip_map(&y, |a, b| a - b).unwrap().norm();
        assert!((gap - (-p.gamma * p.t_horizon).exp() * full).abs() < 1e-14);
    }

    #[test]
    fn snr_of_mean_length_mismatch() {
        let p = SdeParams::default();
        let e = snr_of_mean(&Waveform::silence(1000), &Waveform::silence(1001), &[0.5], &p, &TransformParams::default());
        assert!(matches!(e, Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn validate_params() {
        assert!(SdeParams::default().validate().is_ok());
        assert!(SdeParams::default().with_gamma(0.0).validate().is_err());
        assert!(SdeParams { sigma_min: 0.6, ..SdeParams::default() }.validate().is_err());
        assert!(SdeParams { t_eps: 0.0, ..SdeParams::default() }.validate().is_err());
    }
}

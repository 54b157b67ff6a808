//! Waveform <-> compressed complex spectrogram.
//!
//! Analysis uses a periodic Hann window of 510 samples with a hop of 128,
//! giving 256 one-sided bins. Frames are centred: the signal is reflection
//! padded by half a window on both sides, so a signal of `n` samples yields
//! `1 + n / 128` frames. Synthesis is weighted overlap-add normalised by the
//! summed squared window, which inverts the analysis exactly wherever the
//! window envelope is non-zero.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::spectrogram::ComplexSpectrogram;

pub const SAMPLE_RATE: u32 = 16_000;
pub const WINDOW_LENGTH: usize = 510;
pub const HOP_LENGTH: usize = 128;
pub const NUM_FREQS: usize = WINDOW_LENGTH / 2 + 1;

/// Mono PCM audio at 16 kHz, held in 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
}

impl Waveform {
    /// Fails on NaN or infinite samples.
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { samples })
    }

    pub fn silence(len: usize) -> Self {
        Self {
            samples: vec![0.0; len],
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(SAMPLE_RATE)
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * k).collect(),
        }
    }
}

/// Amplitude compression `c -> beta * |c|^alpha * exp(i * arg c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for TransformParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.15,
        }
    }
}

impl TransformParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidParam(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParam(format!("beta must be positive, got {}", self.beta)));
        }
        Ok(())
    }
}

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Number of frames produced for a signal of `len` samples.
pub fn frame_count(len: usize) -> usize {
    1 + len / HOP_LENGTH
}

/// Reusable STFT/iSTFT plans.
pub struct Stft {
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Default for Stft {
    fn default() -> Self {
        Self::new()
    }
}

impl Stft {
    pub fn new() -> Self {
        let mut planner = FftPlanner::new();
        Self {
            window: hann_periodic(WINDOW_LENGTH),
            forward: planner.plan_fft_forward(WINDOW_LENGTH),
            inverse: planner.plan_fft_inverse(WINDOW_LENGTH),
        }
    }

    pub fn stft(&self, w: &Waveform) -> Result<ComplexSpectrogram> {
        let x = w.samples();
        if x.len() < WINDOW_LENGTH {
            return Err(Error::InputTooShort {
                min: WINDOW_LENGTH,
                actual: x.len(),
            });
        }
        if let Some(index) = x.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let pad = WINDOW_LENGTH / 2;
        let n = x.len();
        // numpy-style "reflect": the edge sample is not repeated
        let padded: Vec<f64> = (0..n + 2 * pad)
            .map(|i| {
                if i < pad {
                    x[pad - i]
                } else if i < pad + n {
                    x[i - pad]
                } else {
                    x[2 * n + pad - 2 - i]
                }
            })
            .collect();

        let frames = frame_count(n);
        let mut out = vec![Complex64::new(0.0, 0.0); NUM_FREQS * frames];
        let mut buf = vec![Complex64::new(0.0, 0.0); WINDOW_LENGTH];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        for t in 0..frames {
            let start = t * HOP_LENGTH;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(padded[start + i] * self.window[i], 0.0);
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            for k in 0..NUM_FREQS {
                out[k * frames + t] = buf[k];
            }
        }
        ComplexSpectrogram::new(NUM_FREQS, frames, out)
    }

    pub fn istft(&self, s: &ComplexSpectrogram, target_len: usize) -> Result<Waveform> {
        if s.is_compressed() {
            return Err(Error::CompressedInput);
        }
        if s.freqs() != NUM_FREQS {
            return Err(Error::FrameGeometry(format!(
                "expected {NUM_FREQS} frequency bins, got {}",
                s.freqs()
            )));
        }
        if s.frames() == 0 {
            return Err(Error::FrameGeometry("no frames".into()));
        }
        let frames = s.frames();
        let ola_len = (frames - 1) * HOP_LENGTH + WINDOW_LENGTH;
        let mut ola = vec![0.0; ola_len];
        let mut env = vec![0.0; ola_len];
        let mut buf = vec![Complex64::new(0.0, 0.0); WINDOW_LENGTH];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        let norm = 1.0 / WINDOW_LENGTH as f64;
        for t in 0..frames {
            for k in 0..NUM_FREQS {
                buf[k] = s.get(k, t);
            }
            // Hermitian completion; with an even length the last stored bin is Nyquist
            for k in NUM_FREQS..WINDOW_LENGTH {
                buf[k] = buf[WINDOW_LENGTH - k].conj();
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let start = t * HOP_LENGTH;
            for i in 0..WINDOW_LENGTH {
                let w = self.window[i];
                ola[start + i] += buf[i].re * norm * w;
                env[start + i] += w * w;
            }
        }
        let pad = WINDOW_LENGTH / 2;
        let samples = (0..target_len)
            .map(|i| {
                let j = i + pad;
                if j < ola_len && env[j] > 1e-11 {
                    ola[j] / env[j]
                } else {
                    0.0
                }
            })
            .collect();
        Waveform::new(samples)
    }
}

pub fn stft(w: &Waveform) -> Result<ComplexSpectrogram> {
    Stft::new().stft(w)
}

pub fn istft(s: &ComplexSpectrogram, target_len: usize) -> Result<Waveform> {
    Stft::new().istft(s, target_len)
}

/// Applies the amplitude compression to every coefficient; `0` maps to `0`.
pub fn compress(s: &ComplexSpectrogram, p: &TransformParams) -> Result<ComplexSpectrogram> {
    p.validate()?;
    if s.is_compressed() {
        return Err(Error::AlreadyCompressed);
    }
    let (alpha, beta) = (p.alpha, p.beta);
    let mut out = s.map(|c| {
        let mag = c.norm();
        if mag == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            c * (beta * mag.powf(alpha - 1.0))
        }
    });
    out.set_compressed(true);
    Ok(out)
}

/// Inverse of [`compress`].
pub fn decompress(s: &ComplexSpectrogram, p: &TransformParams) -> Result<ComplexSpectrogram> {
    p.validate()?;
    if !s.is_compressed() {
        return Err(Error::NotCompressed);
    }
    let (alpha, beta) = (p.alpha, p.beta);
    let mut out = s.map(|c| {
        let mag = c.norm();
        if mag == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            c * ((mag / beta).powf(1.0 / alpha) / mag)
        }
    });
    out.set_compressed(false);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_wave(n: usize, seed: u64) -> Waveform {
        let mut rng = crate::rng::from_seed(seed);
        Waveform::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn periodic_hann_shape() {
        let w = hann_periodic(WINDOW_LENGTH);
        assert_eq!(w[0], 0.0);
        assert!((w[WINDOW_LENGTH / 2] - 1.0).abs() < 1e-15);
        // periodic: symmetric about n/2, not about (n-1)/2
        assert!((w[1] - w[WINDOW_LENGTH - 1]).abs() < 1e-15);
    }

    #[test]
    fn geometry_for_one_second() {
        let s = stft(&Waveform::silence(16_000)).unwrap();
        assert_eq!(s.shape(), (256, 126));
        assert!(s.data().iter().all(|v| *v == c(0.0, 0.0)));
    }

    #[test]
    fn dc_stays_in_the_window_mainlobe() {
        // The periodic Hann window has exactly three nonzero DFT bins, so a
        // constant input shows up in bin 0 and, at half the size, in bin 1.
        let s = stft(&Waveform::new(vec![0.1; 16_000]).unwrap()).unwrap();
        for t in 0..s.frames() {
            let dc = s.get(0, t).norm();
            assert!((dc - 0.1 * 255.0).abs() < 1e-9, "frame {t}: {dc}");
            assert!((s.get(1, t).norm() - 0.5 * dc).abs() < 1e-9);
            for k in 2..NUM_FREQS {
                assert!(s.get(k, t).norm() < 1e-10 * dc, "leak at bin {k}");
            }
        }
    }

    #[test]
    fn too_short_and_non_finite_rejected() {
        assert!(matches!(
            stft(&Waveform::silence(509)),
            Err(Error::InputTooShort { min: 510, actual: 509 })
        ));
        assert!(matches!(Waveform::new(vec![0.0, f64::NAN]), Err(Error::NonFinite { index: 1 })));
    }

    #[test]
    fn round_trip_is_identity() {
        let engine = Stft::new();
        for (n, seed) in [(510, 1), (777, 2), (16_000, 3), (20_001, 4)] {
            let w = random_wave(n, seed);
            let back = engine.istft(&engine.stft(&w).unwrap(), n).unwrap();
            let err = w
                .samples()
                .iter()
                .zip(back.samples())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err < 1e-12, "n={n}: {err}");
        }
    }

    #[test]
    fn istft_zero_and_target_length() {
        let z = ComplexSpectrogram::zeros(NUM_FREQS, 10);
        let w = istft(&z, 5000).unwrap();
        assert_eq!(w.len(), 5000);
        assert!(w.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn istft_rejects_compressed_and_bad_geometry() {
        let s = stft(&random_wave(1000, 9)).unwrap();
        let cs = compress(&s, &TransformParams::default()).unwrap();
        assert!(matches!(istft(&cs, 1000), Err(Error::CompressedInput)));
        assert!(matches!(istft(&ComplexSpectrogram::zeros(255, 4), 100), Err(Error::FrameGeometry(_))));
    }

    #[test]
    fn stft_energy_scales_quadratically() {
        let w = random_wave(4000, 5);
        let e1 = stft(&w).unwrap().norm_sqr();
        let e3 = stft(&w.scale(3.0)).unwrap().norm_sqr();
        assert!((e3 / e1 - 9.0).abs() < 1e-12);
    }

    #[test]
    fn compress_scalar_examples() {
        let p = TransformParams::default();
        let s = ComplexSpectrogram::new(1, 3, vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 4.0)]).unwrap();
        let cs = compress(&s, &p).unwrap();
        assert!(cs.is_compressed());
        assert_eq!(cs.data()[0], c(0.0, 0.0));
        assert!((cs.data()[1] - c(0.15, 0.0)).norm() < 1e-15);
        assert!((cs.data()[2] - c(0.0, 0.3)).norm() < 1e-15);
        assert!(matches!(compress(&cs, &p), Err(Error::AlreadyCompressed)));

        let back = decompress(&ComplexSpectrogram::new(1, 2, vec![c(0.15, 0.0), c(0.0, 0.0)]).unwrap().with_compressed(true), &p).unwrap();
        assert!((back.data()[0] - c(1.0, 0.0)).norm() < 1e-14);
        assert_eq!(back.data()[1], c(0.0, 0.0));
        assert!(matches!(decompress(&s, &p), Err(Error::NotCompressed)));
    }

    #[test]
    fn compress_keeps_phase() {
        let mut rng = crate::rng::from_seed(11);
        let s = ComplexSpectrogram::from_fn(8, 8, |_, _| c(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)));
        let cs = compress(&s, &TransformParams::default()).unwrap();
        for (a, b) in s.data().iter().zip(cs.data()) {
            assert!((a.arg() - b.arg()).abs() <= 4.0 * f64::EPSILON * std::f64::consts::PI);
        }
    }

    #[test]
    fn invalid_transform_params() {
        let s = ComplexSpectrogram::zeros(1, 1);
        assert!(compress(&s, &TransformParams { alpha: 0.0, beta: 0.15 }).is_err());
        assert!(compress(&s, &TransformParams { alpha: 1.5, beta: 0.15 }).is_err());
        assert!(compress(&s, &TransformParams { alpha: 0.5, beta: -1.0 }).is_err());
    }
}

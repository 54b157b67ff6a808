//! Dense complex T-F grid: the state space of the diffusion process.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex values on an `freqs x frames` grid, stored frequency-major.
///
/// Spectrograms produced by [`crate::spectral::stft`] have 256 frequency rows;
/// the process and solver code work on any shape, including the `1 x n`
/// "scalar" grids used to test against closed-form results.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    freqs: usize,
    frames: usize,
    data: Vec<Complex64>,
    compressed: bool,
}

impl ComplexSpectrogram {
    pub fn new(freqs: usize, frames: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != freqs * frames {
            return Err(Error::FrameGeometry(format!(
                "{} values for a {freqs}x{frames} grid",
                data.len()
            )));
        }
        Ok(Self {
            freqs,
            frames,
            data,
            compressed: false,
        })
    }

    pub fn zeros(freqs: usize, frames: usize) -> Self {
        Self {
            freqs,
            frames,
            data: vec![Complex64::new(0.0, 0.0); freqs * frames],
            compressed: false,
        }
    }

    /// A `1 x n` grid filled with `value`.
    pub fn filled(n: usize, value: Complex64) -> Self {
        Self {
            freqs: 1,
            frames: n,
            data: vec![value; n],
            compressed: false,
        }
    }

    pub fn from_fn(freqs: usize, frames: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(freqs * frames);
        for k in 0..freqs {
            for t in 0..frames {
                data.push(f(k, t));
            }
        }
        Self {
            freqs,
            frames,
            data,
            compressed: false,
        }
    }

    pub fn freqs(&self) -> usize {
        self.freqs
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.freqs, self.frames)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_compressed(&self) -> bool {
        self.compressed
    }

    pub(crate) fn set_compressed(&mut self, flag: bool) {
        self.compressed = flag;
    }

    /// Same values with the compression flag forced; used when a solver
    /// output inherits the domain of its conditioning input.
    pub fn with_compressed(mut self, flag: bool) -> Self {
        self.compressed = flag;
        self
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    #[inline]
    pub fn get(&self, freq: usize, frame: usize) -> Complex64 {
        self.data[freq * self.frames + frame]
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    /// Index of the first non-finite value, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data
            .iter()
            .position(|c| !(c.re.is_finite() && c.im.is_finite()))
    }

    pub fn is_finite(&self) -> bool {
        self.first_non_finite().is_none()
    }

    /// Sum of squared magnitudes over all bins (real and imaginary parts).
    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            freqs: self.freqs,
            frames: self.frames,
            data: self.data.iter().map(|&c| f(c)).collect(),
            compressed: self.compressed,
        }
    }

    /// Elementwise combination of two equally shaped grids.
    pub fn zip_map(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            freqs: self.freqs,
            frames: self.frames,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            compressed: self.compressed,
        })
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|c| c * k)
    }

    /// `self += k * other`
    pub fn axpy(&mut self, k: f64, other: &Self) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * k;
        }
        Ok(())
    }

    /// Frames `[start, start + len)` as a new grid.
    pub fn crop_frames(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.frames {
            return Err(Error::FrameGeometry(format!(
                "crop [{start}, {}) exceeds {} frames",
                start + len,
                self.frames
            )));
        }
        Ok(Self::from_fn(self.freqs, len, |k, t| self.get(k, start + t)).with_compressed(self.compressed))
    }
}

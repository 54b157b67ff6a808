//! A small convolutional score network.
//!
//! Every T-F bin is processed independently by the same MLP. Its input is
//! the 5x5 neighbourhood of the bin in `x_t` and `y` (real and imaginary
//! parts times a fixed input scale, zero outside the grid) followed by a
//! sinusoidal embedding of `t`.
//!
//! The two outputs form a complex mask `m` applied to `y`, giving a clean
//! estimate `x0_hat = (1 + m) y`. The score follows from the kernel:
//! `s = (mean(x0_hat, y, t) - x_t) / sigma(t)^2`. An untrained network
//! (`m = 0`) therefore scores towards the corrupted input itself.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use num_complex::Complex64;
use rand::Rng as _;

use super::{guarded_sigma, NfeCounter, ScoreModel};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::sde::{self, SdeParams};
use crate::spectrogram::ComplexSpectrogram;

pub const PATCH_WIDTH: usize = 5;
pub const EMBED_DIM: usize = 32;
pub(crate) const PATCH_FEATURES: usize = 4 * PATCH_WIDTH * PATCH_WIDTH;
pub(crate) const INPUT_DIM: usize = PATCH_FEATURES + EMBED_DIM;
pub(crate) const OUTPUT_DIM: usize = 2;
/// Patch values are multiplied by this before entering the network. Compressed
/// spectra of the synthetic data have a per-component std near 0.12.
pub(crate) const INPUT_SCALE: f64 = 8.0;

/// Rows evaluated per matrix product in [`TinyScoreNet::evaluate`].
const CHUNK_ROWS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// `z * sigmoid(z)`
    Silu,
    /// No nonlinearity; the network is then multilinear in its weights.
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Silu => z / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Silu => {
                let sg = 1.0 / (1.0 + (-z).exp());
                sg * (1.0 + z * (1.0 - sg))
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Sinusoidal features of the process time, frequencies spaced
/// geometrically from 1 to 1000 rad per unit time.
pub(crate) fn time_embedding(t: f64) -> [f64; EMBED_DIM] {
    let half = EMBED_DIM / 2;
    let mut out = [0.0; EMBED_DIM];
    for k in 0..half {
        let w = (1000f64.ln() * k as f64 / (half - 1) as f64).exp();
        out[k] = (w * t).sin();
        out[half + k] = (w * t).cos();
    }
    out
}

/// Network inputs plus the per-row constants that turn the mask into a score.
pub(crate) struct Rows {
    pub features: Array2<f64>,
    pub y: Vec<Complex64>,
    /// `(y - x_t) / sigma^2`
    pub base: Vec<Complex64>,
    /// `e^{-gamma t} / sigma^2`
    pub coef: Vec<f64>,
}

impl Rows {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            features: Array2::zeros((n, INPUT_DIM)),
            y: Vec::with_capacity(n),
            base: Vec::with_capacity(n),
            coef: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    /// Appends bin `(freq, frame)` of the given state. `inv_var` and `coef`
    /// are the time-dependent constants for `t`.
    pub fn push(
        &mut self,
        xt: &ComplexSpectrogram,
        y: &ComplexSpectrogram,
        freq: usize,
        frame: usize,
        emb: &[f64; EMBED_DIM],
        inv_var: f64,
        coef: f64,
    ) {
        let row_idx = self.y.len();
        let mut row = self.features.row_mut(row_idx);
        let row = row.as_slice_mut().expect("standard layout");
        let r = (PATCH_WIDTH / 2) as isize;
        let (nf, nt) = (xt.freqs() as isize, xt.frames() as isize);
        let sc = INPUT_SCALE;
        let mut i = 0;
        for dk in -r..=r {
            for dt in -r..=r {
                let (k, f) = (freq as isize + dk, frame as isize + dt);
                if k >= 0 && k < nf && f >= 0 && f < nt {
                    let (a, b) = (xt.get(k as usize, f as usize), y.get(k as usize, f as usize));
                    row[i..i + 4].copy_from_slice(&[a.re * sc, a.im * sc, b.re * sc, b.im * sc]);
                } else {
                    row[i..i + 4].fill(0.0);
                }
                i += 4;
            }
        }
        row[PATCH_FEATURES..].copy_from_slice(emb);
        let yv = y.get(freq, frame);
        self.y.push(yv);
        self.base.push((yv - xt.get(freq, frame)) * inv_var);
        self.coef.push(coef);
    }
}

/// Cached activations of one forward pass.
pub(crate) struct Forward {
    /// Layer inputs: the features, then each hidden activation.
    inputs: Vec<Array2<f64>>,
    /// Hidden pre-activations.
    pre: Vec<Array2<f64>>,
    pub out: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct TinyScoreNet {
    sizes: Vec<usize>,
    params: Vec<f64>,
    activation: Activation,
    sde: SdeParams,
    counter: NfeCounter,
}

impl TinyScoreNet {
    /// Randomly initialised network with the given hidden widths.
    pub fn new(hidden: &[usize], activation: Activation, sde: SdeParams, rng: &mut Rng) -> Self {
        let mut sizes = vec![INPUT_DIM];
        sizes.extend_from_slice(hidden);
        sizes.push(OUTPUT_DIM);
        let mut params = Vec::with_capacity(param_count(&sizes));
        let layers = sizes.len() - 1;
        for (l, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let mut a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            if l + 1 == layers {
                a *= 0.1;
            }
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-a..a)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self {
            sizes,
            params,
            activation,
            sde,
            counter: NfeCounter::default(),
        }
    }

    /// Two hidden layers of width 128 with SiLU.
    pub fn default_architecture(sde: SdeParams, rng: &mut Rng) -> Self {
        Self::new(&[128, 128], Activation::Silu, sde, rng)
    }

    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>, activation: Activation, sde: SdeParams) -> Result<Self> {
        if sizes.len() < 2 || sizes[0] != INPUT_DIM || sizes[sizes.len() - 1] != OUTPUT_DIM {
            return Err(Error::Weights(format!(
                "architecture {sizes:?} must start at {INPUT_DIM} inputs and end at {OUTPUT_DIM} outputs"
            )));
        }
        if sizes.contains(&0) {
            return Err(Error::Weights(format!("zero-width layer in {sizes:?}")));
        }
        let expect = param_count(&sizes);
        if params.len() != expect {
            return Err(Error::Weights(format!(
                "architecture {sizes:?} needs {expect} parameters, got {}",
                params.len()
            )));
        }
        Ok(Self {
            sizes,
            params,
            activation,
            sde,
            counter: NfeCounter::default(),
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn sde(&self) -> &SdeParams {
        &self.sde
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let mut off = 0;
        for pair in self.sizes.windows(2).take(l) {
            off += pair[0] * pair[1] + pair[1];
        }
        let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = ArrayView2::from_shape((fan_in, fan_out), &self.params[off..off + fan_in * fan_out])
            .expect("layer slice matches its shape");
        let b = ArrayView1::from(&self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out]);
        (w, b)
    }

    fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub(crate) fn forward(&self, features: &Array2<f64>) -> Forward {
        let mut inputs = vec![features.clone()];
        let mut pre = Vec::with_capacity(self.layers() - 1);
        let mut out = None;
        for l in 0..self.layers() {
            let (w, b) = self.layer(l);
            let mut z = inputs[l].dot(&w);
            z += &b;
            if l + 1 == self.layers() {
                out = Some(z);
            } else {
                let act = self.activation;
                let a = z.mapv(|v| act.apply(v));
                pre.push(z);
                inputs.push(a);
            }
        }
        Forward {
            inputs,
            pre,
            out: out.expect("at least one layer"),
        }
    }

    /// Scores for the rows given the network outputs.
    pub(crate) fn scores(rows: &Rows, out: &Array2<f64>) -> Vec<Complex64> {
        (0..rows.len())
            .map(|i| {
                let m = Complex64::new(out[[i, 0]], out[[i, 1]]);
                rows.base[i] + m * rows.y[i] * rows.coef[i]
            })
            .collect()
    }

    /// Parameter gradient given the loss gradient w.r.t. each row's score.
    pub(crate) fn backward(&self, rows: &Rows, fwd: &Forward, d_score: &[Complex64]) -> Vec<f64> {
        let n = rows.len();
        let mut delta = Array2::zeros((n, OUTPUT_DIM));
        for i in 0..n {
            let (g, yv, c) = (d_score[i], rows.y[i], rows.coef[i]);
            delta[[i, 0]] = c * (g.re * yv.re + g.im * yv.im);
            delta[[i, 1]] = c * (g.im * yv.re - g.re * yv.im);
        }
        let mut grads: Vec<(Array2<f64>, ndarray::Array1<f64>)> = Vec::with_capacity(self.layers());
        for l in (0..self.layers()).rev() {
            let dw = fwd.inputs[l].t().dot(&delta);
            let db = delta.sum_axis(Axis(0));
            grads.push((dw, db));
            if l > 0 {
                let (w, _) = self.layer(l);
                let mut d_in = delta.dot(&w.t());
                let act = self.activation;
                ndarray::Zip::from(&mut d_in)
                    .and(&fwd.pre[l - 1])
                    .for_each(|d, &z| *d *= act.derivative(z));
                delta = d_in;
            }
        }
        grads.reverse();
        let mut flat = Vec::with_capacity(self.params.len());
        for (dw, db) in grads {
            flat.extend(dw.iter());
            flat.extend(db.iter());
        }
        flat
    }

    /// Time-dependent constants `(1/sigma^2, e^{-gamma t}/sigma^2)`.
    pub(crate) fn time_constants(&self, t: f64) -> Result<(f64, f64)> {
        let sigma = guarded_sigma(t, &self.sde)?;
        let inv_var = 1.0 / (sigma * sigma);
        Ok((inv_var, sde::clean_weight(t, &self.sde) * inv_var))
    }

    /// Clean-signal estimate `(1 + m) y` implied by the network at `t`.
    pub fn denoise(&self, xt: &ComplexSpectrogram, y: &ComplexSpectrogram, t: f64) -> Result<ComplexSpectrogram> {
        let mask = self.mask(xt, y, t)?;
        y.zip_map(&mask, |yv, m| (m + 1.0) * yv)
    }

    fn mask(&self, xt: &ComplexSpectrogram, y: &ComplexSpectrogram, t: f64) -> Result<ComplexSpectrogram> {
        xt.check_same_shape(y)?;
        let emb = time_embedding(t);
        let frames = xt.frames();
        let total = xt.len();
        let mut out = Vec::with_capacity(total);
        let mut start = 0;
        while start < total {
            let end = (start + CHUNK_ROWS).min(total);
            let mut rows = Rows::with_capacity(end - start);
            for idx in start..end {
                rows.push(xt, y, idx / frames, idx % frames, &emb, 0.0, 0.0);
            }
            let fwd = self.forward(&rows.features);
            let o = &fwd.out;
            out.extend((0..rows.len()).map(|i| Complex64::new(o[[i, 0]], o[[i, 1]])));
            start = end;
        }
        ComplexSpectrogram::new(xt.freqs(), frames, out)
    }
}

pub(crate) fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
}

impl ScoreModel for TinyScoreNet {
    fn evaluate(&self, xt: &ComplexSpectrogram, y: &ComplexSpectrogram, t: f64) -> Result<ComplexSpectrogram> {
        self.counter.bump();
        let (inv_var, coef) = self.time_constants(t)?;
        let mask = self.mask(xt, y, t)?;
        let mut s = xt.zip_map(y, |xv, yv| (yv - xv) * inv_var)?;
        for ((sv, m), yv) in s.data_mut().iter_mut().zip(mask.data()).zip(y.data()) {
            *sv += m * yv * coef;
        }
        Ok(s)
    }

    fn nfe(&self) -> u64 {
        self.counter.get()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;

    fn grid(freqs: usize, frames: usize, rng: &mut Rng) -> ComplexSpectrogram {
        ComplexSpectrogram::from_fn(freqs, frames, |_, _| {
            Complex64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))
        })
    }

    #[test]
    fn default_parameter_count() {
        let net = TinyScoreNet::default_architecture(SdeParams::default(), &mut from_seed(0));
        assert_eq!(net.sizes(), &[132, 128, 128, 2]);
        assert_eq!(net.param_count(), 132 * 128 + 128 + 128 * 128 + 128 + 128 * 2 + 2);
    }

    #[test]
    fn evaluate_is_shape_preserving_and_counted() {
        let mut rng = from_seed(1);
        let net = TinyScoreNet::new(&[16], Activation::Silu, SdeParams::default(), &mut rng);
        let (x, y) = (grid(7, 9, &mut rng), grid(7, 9, &mut rng));
        let s = net.evaluate(&x, &y, 0.5).unwrap();
        assert_eq!(s.shape(), (7, 9));
        assert!(s.is_finite());
        let again = net.evaluate(&x, &y, 0.5).unwrap();
        assert_eq!(s, again);
        assert_eq!(net.nfe(), 2);
        assert!(net.evaluate(&x, &grid(7, 8, &mut rng), 0.5).is_err());
    }

    #[test]
    fn zero_mask_scores_towards_y() {
        let mut rng = from_seed(2);
        let p = SdeParams::default();
        let mut net = TinyScoreNet::new(&[8], Activation::Silu, p, &mut rng);
        net.params_mut().fill(0.0);
        let (x, y) = (grid(4, 4, &mut rng), grid(4, 4, &mut rng));
        let t = 0.7;
        let s = net.evaluate(&x, &y, t).unwrap();
        let oracle = sde::kernel_score(&x, &y, &y, t, &p).unwrap();
        for (a, b) in s.data().iter().zip(oracle.data()) {
            assert!((a - b).norm() < 1e-12 * b.norm().max(1.0));
        }
    }

    #[test]
    fn chunked_evaluation_matches_single_rows() {
        let mut rng = from_seed(3);
        let net = TinyScoreNet::new(&[12, 6], Activation::Silu, SdeParams::default(), &mut rng);
        // more bins than one chunk
        let (x, y) = (grid(70, 70, &mut rng), grid(70, 70, &mut rng));
        let t = 0.33;
        let s = net.evaluate(&x, &y, t).unwrap();
        let (inv_var, coef) = net.time_constants(t).unwrap();
        let emb = time_embedding(t);
        for &(k, f) in &[(0, 0), (69, 69), (35, 12), (58, 66)] {
            let mut rows = Rows::with_capacity(1);
            rows.push(&x, &y, k, f, &emb, inv_var, coef);
            let fwd = net.forward(&rows.features);
            let single = TinyScoreNet::scores(&rows, &fwd.out)[0];
            assert!((single - s.get(k, f)).norm() <= 1e-12 * single.norm().max(1.0));
        }
    }

    #[test]
    fn rejects_bad_architecture() {
        let p = SdeParams::default();
        assert!(TinyScoreNet::from_parts(vec![131, 2], vec![0.0; 131 * 2 + 2], Activation::Silu, p).is_err());
        assert!(TinyScoreNet::from_parts(vec![132, 2], vec![0.0; 3], Activation::Silu, p).is_err());
        assert!(TinyScoreNet::from_parts(vec![132, 2], vec![0.0; 132 * 2 + 2], Activation::Silu, p).is_ok());
    }

    #[test]
    fn time_embedding_is_bounded() {
        for &t in &[0.0, 0.03, 0.5, 1.0] {
            let e = time_embedding(t);
            assert!(e.iter().all(|v| v.abs() <= 1.0));
            for k in 0..EMBED_DIM / 2 {
                assert!((e[k].powi(2) + e[k + EMBED_DIM / 2].powi(2) - 1.0).abs() < 1e-12);
            }
        }
    }
}

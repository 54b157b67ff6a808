//! Training: denoising score matching with an Adam update and hand-written
//! backpropagation, plus a finite-difference gradient check.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng as _;

use super::guarded_sigma;
use super::net::{time_embedding, Rows, TinyScoreNet};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::sde::{self, SdeParams};
use crate::spectrogram::ComplexSpectrogram;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Pairs per step.
    pub batch_size: usize,
    /// Longest random crop, in frames.
    pub crop_frames: usize,
    /// Bins drawn per pair and step. The loss is a mean over bins, so a
    /// uniform subset gives an unbiased estimate of it and of its gradient.
    pub positions_per_item: usize,
    pub steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 8,
            crop_frames: 256,
            positions_per_item: 256,
            steps: 500,
        }
    }
}

/// Adam moment state for one parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(n: usize, cfg: &TrainConfig) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// One fixed `(x0, y, t, z)` draw over a full grid.
#[derive(Debug, Clone)]
pub struct LossSample {
    pub x0: ComplexSpectrogram,
    pub y: ComplexSpectrogram,
    pub t: f64,
    pub z: ComplexSpectrogram,
}

/// Rows and score targets `-z / sigma` for a set of bins of one perturbed pair.
fn push_rows(
    net: &TinyScoreNet,
    rows: &mut Rows,
    targets: &mut Vec<Complex64>,
    xt: &ComplexSpectrogram,
    y: &ComplexSpectrogram,
    z: &ComplexSpectrogram,
    t: f64,
    bins: impl Iterator<Item = usize>,
) -> Result<()> {
    let (inv_var, coef) = net.time_constants(t)?;
    let inv_sigma = 1.0 / guarded_sigma(t, net.sde())?;
    let emb = time_embedding(t);
    let frames = xt.frames();
    for idx in bins {
        rows.push(xt, y, idx / frames, idx % frames, &emb, inv_var, coef);
        targets.push(-z.data()[idx] * inv_sigma);
    }
    Ok(())
}

fn rows_for_samples(net: &TinyScoreNet, samples: &[LossSample]) -> Result<(Rows, Vec<Complex64>)> {
    let p = *net.sde();
    let total: usize = samples.iter().map(|s| s.x0.len()).sum();
    let mut rows = Rows::with_capacity(total);
    let mut targets = Vec::with_capacity(total);
    for s in samples {
        s.x0.check_same_shape(&s.y)?;
        s.x0.check_same_shape(&s.z)?;
        let sigma = guarded_sigma(s.t, &p)?;
        let mut xt = sde::mean(&s.x0, &s.y, s.t, &p)?;
        xt.axpy(sigma, &s.z)?;
        push_rows(net, &mut rows, &mut targets, &xt, &s.y, &s.z, s.t, 0..s.x0.len())?;
    }
    Ok((rows, targets))
}

/// Mean squared error over real components and its parameter gradient.
fn rows_loss_grad(net: &TinyScoreNet, rows: &Rows, targets: &[Complex64], want_grad: bool) -> (f64, Option<Vec<f64>>) {
    let fwd = net.forward(&rows.features);
    let scores = TinyScoreNet::scores(rows, &fwd.out);
    let n = rows.len() as f64;
    let mut loss = 0.0;
    let mut d_score = Vec::with_capacity(rows.len());
    for (s, tg) in scores.iter().zip(targets) {
        let e = s - tg;
        loss += e.norm_sqr();
        d_score.push(e / n);
    }
    loss /= 2.0 * n;
    let grad = want_grad.then(|| net.backward(rows, &fwd, &d_score));
    (loss, grad)
}

/// DSM loss averaged over the given samples and its gradient.
pub fn loss_and_gradient(net: &TinyScoreNet, samples: &[LossSample]) -> Result<(f64, Vec<f64>)> {
    let (rows, targets) = rows_for_samples(net, samples)?;
    let (loss, grad) = rows_loss_grad(net, &rows, &targets, true);
    Ok((loss, grad.expect("requested")))
}

/// Largest relative difference between the analytic gradient and central
/// differences with step `eps`, over the parameters in `indices`.
pub fn gradient_check(net: &TinyScoreNet, sample: &LossSample, eps: f64, indices: &[usize]) -> Result<f64> {
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(Error::InvalidParam(format!("finite-difference step {eps} outside [1e-6, 1e-3]")));
    }
    let samples = std::slice::from_ref(sample);
    let (rows, targets) = rows_for_samples(net, samples)?;
    let (_, grad) = rows_loss_grad(net, &rows, &targets, true);
    let grad = grad.expect("requested");
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for &i in indices {
        if i >= net.param_count() {
            return Err(Error::InvalidParam(format!("parameter index {i} out of range")));
        }
        let orig = net.params()[i];
        probe.params_mut()[i] = orig + eps;
        let (up, _) = rows_loss_grad(&probe, &rows, &targets, false);
        probe.params_mut()[i] = orig - eps;
        let (down, _) = rows_loss_grad(&probe, &rows, &targets, false);
        probe.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let analytic = grad[i];
        let scale = numeric.abs().max(analytic.abs());
        if scale > 0.0 {
            worst = worst.max((numeric - analytic).abs() / scale);
        }
    }
    Ok(worst)
}

/// One optimisation step on a batch of `(x0, y)` pairs in the compressed
/// domain. Returns the batch loss before the update.
pub fn training_step(
    net: &mut TinyScoreNet,
    adam: &mut Adam,
    batch: &[(&ComplexSpectrogram, &ComplexSpectrogram)],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidParam("empty training batch".into()));
    }
    let p: SdeParams = *net.sde();
    let mut items = Vec::with_capacity(batch.len());
    for &(x0, y) in batch {
        x0.check_same_shape(y)?;
        let width = cfg.crop_frames.min(x0.frames()).max(1);
        let start = rng.random_range(0..=x0.frames() - width);
        let (x0c, yc) = (x0.crop_frames(start, width)?, y.crop_frames(start, width)?);
        let t = rng.random_range(p.t_eps..p.t_horizon);
        let (xt, z) = sde::perturb(&x0c, &yc, t, &p, rng)?;
        let bins: Vec<usize> = if cfg.positions_per_item >= x0c.len() {
            (0..x0c.len()).collect()
        } else {
            (0..cfg.positions_per_item).map(|_| rng.random_range(0..x0c.len())).collect()
        };
        items.push((xt, yc, z, t, bins));
    }
    let total = items.iter().map(|it| it.4.len()).sum();
    let mut rows = Rows::with_capacity(total);
    let mut targets = Vec::with_capacity(total);
    for (xt, yc, z, t, bins) in &items {
        push_rows(net, &mut rows, &mut targets, xt, yc, z, *t, bins.iter().copied())?;
    }
    let ts: Vec<f64> = items.iter().map(|it| it.3).collect();
    let (loss, grad) = rows_loss_grad(net, &rows, &targets, true);
    let grad = grad.expect("requested");
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteLoss {
            step: adam.step as usize,
            detail: format!("loss {loss}, t values {ts:?}"),
        });
    }
    adam.update(net.params_mut(), &grad, cfg.lr);
    Ok(loss)
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub losses: Vec<f64>,
}

impl TrainReport {
    /// Mean of the first `window` step losses.
    pub fn initial_smoothed(&self, window: usize) -> f64 {
        mean(&self.losses[..window.min(self.losses.len())])
    }

    /// Mean of the last `window` step losses.
    pub fn final_smoothed(&self, window: usize) -> f64 {
        let n = self.losses.len();
        mean(&self.losses[n - window.min(n)..])
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Runs `cfg.steps` steps over shuffled passes through `data`.
pub fn train(
    net: &mut TinyScoreNet,
    data: &[(ComplexSpectrogram, ComplexSpectrogram)],
    cfg: &TrainConfig,
    rng: &mut Rng,
    mut on_step: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::InvalidParam("empty training set".into()));
    }
    let mut adam = Adam::new(net.param_count(), cfg);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut report = TrainReport::default();
    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size.min(data.len()) {
            if cursor == order.len() {
                order.shuffle(rng);
                cursor = 0;
            }
            let (x0, y) = &data[order[cursor]];
            batch.push((x0, y));
            cursor += 1;
        }
        let loss = training_step(net, &mut adam, &batch, cfg, rng)?;
        on_step(step, loss);
        report.losses.push(loss);
    }
    Ok(report)
}

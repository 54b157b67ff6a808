//! Reverse-time solvers: the predictor-corrector sampler and the
//! probability-flow ODE with adaptive Dormand-Prince integration.
//!
//! Time runs from `T` down to `t_eps`. Every solver marches in `tau = T - t`
//! with positive steps; the update rules below are written for that
//! direction.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::score::ScoreModel;
use crate::sde::{self, SdeParams};
use crate::spectral::{self, TransformParams, Waveform, SAMPLE_RATE};
use crate::spectrogram::ComplexSpectrogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    Pc,
    Ode,
}

impl SamplerKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pc" => Ok(Self::Pc),
            "ode" => Ok(Self::Ode),
            other => Err(Error::InvalidParam(format!("unknown sampler '{other}' (expected pc or ode)"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pc => "pc",
            Self::Ode => "ode",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// Predictor steps (pc).
    pub n_steps: usize,
    /// Langevin steps after each predictor step (pc).
    pub corrector_steps: usize,
    /// Langevin step-size parameter (pc).
    pub r: f64,
    pub atol: f64,
    pub rtol: f64,
    /// Use `g^2 / 2` in the ODE drift. `false` uses the full `g^2`.
    pub ode_half_factor: bool,
    pub seed: u64,
    /// Record `(t, ‖x‖)` after every step.
    pub trace: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            kind: SamplerKind::Pc,
            n_steps: 30,
            corrector_steps: 1,
            r: 0.5,
            atol: 1e-6,
            rtol: 1e-3,
            ode_half_factor: true,
            seed: 0,
            trace: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            SamplerKind::Pc => {
                if self.n_steps == 0 {
                    return Err(Error::InvalidParam("N must be at least 1".into()));
                }
                if !(self.r > 0.0 && self.r.is_finite()) {
                    return Err(Error::InvalidParam(format!("snr r must be positive, got {}", self.r)));
                }
            }
            SamplerKind::Ode => {
                if !(self.atol > 0.0 && self.rtol > 0.0) {
                    return Err(Error::InvalidParam(format!(
                        "tolerances must be positive, got atol {} rtol {}",
                        self.atol, self.rtol
                    )));
                }
            }
        }
        Ok(())
    }

    /// Score evaluations a PC solve will make.
    pub fn pc_nfe(&self) -> u64 {
        (self.n_steps * (1 + self.corrector_steps)) as u64
    }

    /// Short settings label for reports.
    pub fn settings(&self) -> String {
        match self.kind {
            SamplerKind::Pc => format!("N={} corrector={} r={}", self.n_steps, self.corrector_steps, self.r),
            SamplerKind::Ode => format!("atol={:e} rtol={:e}", self.atol, self.rtol),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub nfe: u64,
    pub wall_time: f64,
    /// `wall_time / audio duration`; zero until a duration is attached.
    pub rtf: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub step_trace: Option<Vec<(f64, f64)>>,
}

impl SolveStats {
    pub fn set_duration(&mut self, seconds: f64) {
        self.rtf = if seconds > 0.0 { self.wall_time / seconds } else { 0.0 };
    }
}

fn diverged(x: &ComplexSpectrogram, t: f64, last_valid_t: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged { t, last_valid_t })
    }
}

/// One Euler-Maruyama step of the reverse SDE from `t` to `t - dt`.
pub fn em_predictor_step(
    x: &ComplexSpectrogram,
    y: &ComplexSpectrogram,
    t: f64,
    dt: f64,
    model: &dyn ScoreModel,
    p: &SdeParams,
    rng: &mut Rng,
) -> Result<ComplexSpectrogram> {
    if !(dt > 0.0) || t - dt < p.t_eps - 1e-12 {
        return Err(Error::InvalidParam(format!("predictor step {dt} from t = {t} leaves [t_eps, T]")));
    }
    let g = sde::diffusion_coeff(t, p)?;
    let s = model.evaluate(x, y, t)?;
    let z = sde::sample_complex_gaussian(x.freqs(), x.frames(), 1.0, p.noise, rng);
    let (g2, gamma, noise) = (g * g, p.gamma, g * dt.sqrt());
    let mut out = x.clone();
    for (((o, &yv), &sv), &zv) in out.data_mut().iter_mut().zip(y.data()).zip(s.data()).zip(z.data()) {
        let xv = *o;
        *o = xv + (-(yv - xv) * gamma + sv * g2) * dt + zv * noise;
    }
    diverged(&out, t - dt, t)?;
    Ok(out)
}

/// One annealed Langevin step at `t`. A vanishing score leaves `x` unchanged.
pub fn langevin_corrector_step(
    x: &ComplexSpectrogram,
    y: &ComplexSpectrogram,
    t: f64,
    r: f64,
    model: &dyn ScoreModel,
    p: &SdeParams,
    rng: &mut Rng,
) -> Result<ComplexSpectrogram> {
    if !(r > 0.0) {
        return Err(Error::InvalidParam(format!("snr r must be positive, got {r}")));
    }
    let s = model.evaluate(x, y, t)?;
    let z = sde::sample_complex_gaussian(x.freqs(), x.frames(), 1.0, p.noise, rng);
    let s_norm = s.norm();
    if s_norm == 0.0 {
        return Ok(x.clone());
    }
    let eps = 2.0 * (r * z.norm() / s_norm).powi(2);
    let mut out = x.clone();
    out.axpy(eps, &s)?;
    out.axpy((2.0 * eps).sqrt(), &z)?;
    diverged(&out, t, t)?;
    Ok(out)
}

fn record(trace: &mut Option<Vec<(f64, f64)>>, t: f64, x: &ComplexSpectrogram) {
    if let Some(v) = trace {
        v.push((t, x.norm()));
    }
}

/// Predictor-corrector solve from a fresh prior sample.
pub fn pc_solve(
    y: &ComplexSpectrogram,
    model: &dyn ScoreModel,
    cfg: &SamplerConfig,
    p: &SdeParams,
) -> Result<(ComplexSpectrogram, SolveStats)> {
    let mut rng = rng::substream(cfg.seed, "solve");
    let x_init = sde::sample_prior(y, p, &mut rng);
    pc_solve_from(x_init, y, model, cfg, p, &mut rng)
}

/// Predictor-corrector solve from a given state at `t = T`.
pub fn pc_solve_from(
    x_init: ComplexSpectrogram,
    y: &ComplexSpectrogram,
    model: &dyn ScoreModel,
    cfg: &SamplerConfig,
    p: &SdeParams,
    rng: &mut Rng,
) -> Result<(ComplexSpectrogram, SolveStats)> {
    cfg.validate()?;
    p.validate()?;
    x_init.check_same_shape(y)?;
    let start = Instant::now();
    let nfe0 = model.nfe();
    let n = cfg.n_steps;
    let span = p.t_horizon - p.t_eps;
    let time = |i: usize| if i == n { p.t_eps } else { p.t_horizon - span * i as f64 / n as f64 };
    let mut trace = cfg.trace.then(Vec::new);
    let mut x = x_init;
    record(&mut trace, p.t_horizon, &x);
    for i in 0..n {
        let (t, t_next) = (time(i), time(i + 1));
        x = em_predictor_step(&x, y, t, t - t_next, model, p, rng)?;
        for _ in 0..cfg.corrector_steps {
            x = langevin_corrector_step(&x, y, t_next, cfg.r, model, p, rng)?;
        }
        record(&mut trace, t_next, &x);
    }
    let stats = SolveStats {
        nfe: model.nfe() - nfe0,
        wall_time: start.elapsed().as_secs_f64(),
        accepted_steps: n,
        step_trace: trace,
        ..SolveStats::default()
    };
    Ok((x, stats))
}

/// Probability-flow drift in reverse time, `dx/dtau`.
pub fn ode_rhs(
    x: &ComplexSpectrogram,
    y: &ComplexSpectrogram,
    t: f64,
    model: &dyn ScoreModel,
    p: &SdeParams,
    half: bool,
) -> Result<ComplexSpectrogram> {
    let g = sde::diffusion_coeff(t, p)?;
    let k = if half { 0.5 * g * g } else { g * g };
    let s = model.evaluate(x, y, t)?;
    let mut out = x.zip_map(y, |xv, yv| -(yv - xv) * p.gamma)?;
    out.axpy(k, &s)?;
    Ok(out)
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [&[f64]; 7] = [
    &[],
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const MIN_STEP: f64 = 1e-12;

/// Adaptive probability-flow solve from a fresh prior sample.
pub fn rk45_solve(
    y: &ComplexSpectrogram,
    model: &dyn ScoreModel,
    cfg: &SamplerConfig,
    p: &SdeParams,
) -> Result<(ComplexSpectrogram, SolveStats)> {
    let mut rng = rng::substream(cfg.seed, "solve");
    let x_init = sde::sample_prior(y, p, &mut rng);
    rk45_solve_from(x_init, y, model, cfg, p)
}

/// Adaptive probability-flow solve from a given state at `t = T`.
pub fn rk45_solve_from(
    x_init: ComplexSpectrogram,
    y: &ComplexSpectrogram,
    model: &dyn ScoreModel,
    cfg: &SamplerConfig,
    p: &SdeParams,
) -> Result<(ComplexSpectrogram, SolveStats)> {
    cfg.validate()?;
    p.validate()?;
    x_init.check_same_shape(y)?;
    let start = Instant::now();
    let nfe0 = model.nfe();
    let tau_end = p.t_horizon - p.t_eps;
    let at = |tau: f64| (p.t_horizon - tau).max(p.t_eps);
    let rhs = |x: &ComplexSpectrogram, tau: f64| ode_rhs(x, y, at(tau), model, p, cfg.ode_half_factor);

    let mut trace = cfg.trace.then(Vec::new);
    let mut x = x_init;
    record(&mut trace, p.t_horizon, &x);
    let mut tau = 0.0;
    let mut h = tau_end / 100.0;
    let mut k1 = rhs(&x, tau)?;
    let (mut accepted, mut rejected) = (0, 0);
    let mut k: Vec<ComplexSpectrogram> = Vec::with_capacity(7);
    while tau < tau_end {
        h = h.min(tau_end - tau);
        if h < MIN_STEP {
            return Err(Error::StepUnderflow { t: at(tau), h });
        }
        k.clear();
        k.push(k1.clone());
        let mut x_new = x.clone();
        for stage in 1..7 {
            let mut xs = x.clone();
            for (j, &a) in A[stage].iter().enumerate() {
                if a != 0.0 {
                    xs.axpy(h * a, &k[j])?;
                }
            }
            if stage == 6 {
                x_new = xs.clone();
            }
            k.push(rhs(&xs, tau + C[stage] * h)?);
        }
        if !x_new.is_finite() || !k[6].is_finite() {
            return Err(Error::Diverged {
                t: at(tau + h),
                last_valid_t: at(tau),
            });
        }
        let mut acc = 0.0;
        for i in 0..x.len() {
            let mut e = num_complex::Complex64::new(0.0, 0.0);
            for (j, &w) in E.iter().enumerate() {
                if w != 0.0 {
                    e += k[j].data()[i] * w;
                }
            }
            e *= h;
            let (xo, xn) = (x.data()[i], x_new.data()[i]);
            let sc_re = cfg.atol + cfg.rtol * xo.re.abs().max(xn.re.abs());
            let sc_im = cfg.atol + cfg.rtol * xo.im.abs().max(xn.im.abs());
            acc += (e.re / sc_re).powi(2) + (e.im / sc_im).powi(2);
        }
        let err = (acc / (2 * x.len()) as f64).sqrt();
        if err <= 1.0 {
            tau = if tau + h >= tau_end { tau_end } else { tau + h };
            x = x_new;
            k1 = k.pop().expect("seven stages");
            accepted += 1;
            record(&mut trace, at(tau), &x);
            let factor = if err == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
            };
            h *= factor;
        } else {
            rejected += 1;
            h *= (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, 1.0);
        }
    }
    let stats = SolveStats {
        nfe: model.nfe() - nfe0,
        wall_time: start.elapsed().as_secs_f64(),
        accepted_steps: accepted,
        rejected_steps: rejected,
        step_trace: trace,
        ..SolveStats::default()
    };
    Ok((x, stats))
}

/// Exact probability-flow trajectory under the true conditional score:
/// `x_t = mu(t) + (sigma(t) / sigma(T)) (x_T - mu(T))`.
pub fn closed_form_ode_solution(
    x_t_horizon: &ComplexSpectrogram,
    x0: &ComplexSpectrogram,
    y: &ComplexSpectrogram,
    t: f64,
    p: &SdeParams,
) -> Result<ComplexSpectrogram> {
    let mu_t = sde::mean(x0, y, t, p)?;
    let mu_end = sde::mean(x0, y, p.t_horizon, p)?;
    let ratio = sde::sigma(t, p)? / sde::sigma(p.t_horizon, p)?;
    let mut out = x_t_horizon.zip_map(&mu_end, |a, m| (a - m) * ratio)?;
    out.axpy(1.0, &mu_t)?;
    Ok(out)
}

/// Runs the configured solver on a spectrogram in the compressed domain.
pub fn solve(
    y: &ComplexSpectrogram,
    model: &dyn ScoreModel,
    cfg: &SamplerConfig,
    p: &SdeParams,
) -> Result<(ComplexSpectrogram, SolveStats)> {
    match cfg.kind {
        SamplerKind::Pc => pc_solve(y, model, cfg, p),
        SamplerKind::Ode => rk45_solve(y, model, cfg, p),
    }
}

/// Waveform in, waveform out: transform, solve, invert to the input length.
pub fn enhance(
    y_wave: &Waveform,
    model: &dyn ScoreModel,
    cfg: &SamplerConfig,
    p: &SdeParams,
    tp: &TransformParams,
) -> Result<(Waveform, SolveStats)> {
    let engine = spectral::Stft::new();
    let y = spectral::compress(&engine.stft(y_wave)?, tp)?;
    let (x, mut stats) = solve(&y, model, cfg, p)?;
    let x_wave = engine.istft(&spectral::decompress(&x.with_compressed(true), tp)?, y_wave.len())?;
    stats.set_duration(y_wave.len() as f64 / f64::from(SAMPLE_RATE));
    Ok((x_wave, stats))
}

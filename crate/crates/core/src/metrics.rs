//! Scale-invariant evaluation metrics.
//!
//! The estimate is split as `est = e_target + e_interf + e_artif`, where
//! `e_target` is the projection of `est` onto the reference, `e_interf` is the
//! projection of the residual onto the noise after removing its component
//! along the reference, and `e_artif` is what remains. No mean is removed.
//! All values are clamped to [-100, 100] dB.

use crate::error::{Error, Result};
use crate::spectral::Waveform;

pub const DB_CAP: f64 = 100.0;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn energy(a: &[f64]) -> f64 {
    dot(a, a)
}

fn check_len(a: &Waveform, b: &Waveform) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// `10 log10(num / den)` clamped to the cap, with `x/0` taken as `+cap`.
pub fn capped_db(num: f64, den: f64) -> f64 {
    if den <= 0.0 {
        return if num > 0.0 { DB_CAP } else { 0.0 };
    }
    if num <= 0.0 {
        return -DB_CAP;
    }
    (10.0 * (num / den).log10()).clamp(-DB_CAP, DB_CAP)
}

/// Energies of the three components of the decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub target: f64,
    pub interf: f64,
    pub artif: f64,
    /// `‖est - e_target‖²`
    pub residual: f64,
}

fn target_projection(est: &Waveform, reference: &Waveform) -> Result<(f64, Vec<f64>)> {
    check_len(est, reference)?;
    let r = reference.samples();
    let rr = energy(r);
    if rr == 0.0 {
        return Err(Error::ZeroReference);
    }
    let alpha = dot(est.samples(), r) / rr;
    let residual = est.samples().iter().zip(r).map(|(e, r)| e - alpha * r).collect();
    Ok((alpha * alpha * rr, residual))
}

pub fn decompose(est: &Waveform, reference: &Waveform, noise: &Waveform) -> Result<Decomposition> {
    check_len(est, noise)?;
    let (target, residual) = target_projection(est, reference)?;
    let (r, n) = (reference.samples(), noise.samples());
    if energy(n) == 0.0 {
        return Err(Error::ZeroSignal("noise reference"));
    }
    let k = dot(n, r) / energy(r);
    let n_perp: Vec<f64> = n.iter().zip(r).map(|(n, r)| n - k * r).collect();
    let nn = energy(&n_perp);
    let interf_gain = if nn > 0.0 { dot(&residual, &n_perp) / nn } else { 0.0 };
    let artif: f64 = residual
        .iter()
        .zip(&n_perp)
        .map(|(e, n)| (e - interf_gain * n).powi(2))
        .sum();
    Ok(Decomposition {
        target,
        interf: interf_gain * interf_gain * nn,
        artif,
        residual: energy(&residual),
    })
}

pub fn si_sdr(est: &Waveform, reference: &Waveform) -> Result<f64> {
    let (target, residual) = target_projection(est, reference)?;
    Ok(capped_db(target, energy(&residual)))
}

pub fn si_sir(est: &Waveform, reference: &Waveform, noise: &Waveform) -> Result<f64> {
    let d = decompose(est, reference, noise)?;
    Ok(capped_db(d.target, d.interf))
}

pub fn si_sar(est: &Waveform, reference: &Waveform, noise: &Waveform) -> Result<f64> {
    let d = decompose(est, reference, noise)?;
    Ok(capped_db(d.target, d.artif))
}

/// Power ratio of `signal` to `noise` in dB.
pub fn snr_db(signal: &Waveform, noise: &Waveform) -> Result<f64> {
    check_len(signal, noise)?;
    let pn = noise.energy();
    if pn == 0.0 {
        return Err(Error::ZeroSignal("noise"));
    }
    Ok(capped_db(signal.energy(), pn))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub si_sdr: f64,
    pub si_sir: Option<f64>,
    pub si_sar: Option<f64>,
    pub snr: Option<f64>,
}

impl MetricReport {
    /// SI-SDR always; SI-SIR, SI-SAR and the residual SNR when the noise is known.
    pub fn compute(est: &Waveform, reference: &Waveform, noise: Option<&Waveform>) -> Result<Self> {
        let si_sdr = si_sdr(est, reference)?;
        let Some(noise) = noise else {
            return Ok(Self {
                si_sdr,
                si_sir: None,
                si_sar: None,
                snr: None,
            });
        };
        let d = decompose(est, reference, noise)?;
        let err: Vec<f64> = est.samples().iter().zip(reference.samples()).map(|(e, r)| e - r).collect();
        Ok(Self {
            si_sdr,
            si_sir: Some(capped_db(d.target, d.interf)),
            si_sar: Some(capped_db(d.target, d.artif)),
            snr: Some(capped_db(reference.energy(), energy(&err))),
        })
    }
}

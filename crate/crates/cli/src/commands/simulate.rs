use std::path::{Path, PathBuf};

use ouve_core::audio::{generate_pair, CleanKind, ManifestEntry, NoiseKind};
use ouve_core::metrics::snr_db;
use ouve_core::num_complex::Complex64;
use ouve_core::rng::item_stream;
use ouve_core::sampler::em_predictor_step;
use ouve_core::score::AnalyticOracle;
use ouve_core::sde::{self, sample_complex_gaussian, SdeParams};
use ouve_core::spectrogram::ComplexSpectrogram;
use ouve_core::{Error, Result};

use super::{csv_error, csv_writer};
use crate::RunConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOptions {
    pub gammas: Vec<f64>,
    /// Sample paths written per direction and gamma.
    pub n_paths: usize,
    /// Points of the uniform time grid on `[0, T]`.
    pub grid_points: usize,
    /// Euler-Maruyama substeps per grid interval for forward paths.
    pub substeps: usize,
    /// Predictor steps of the reverse paths.
    pub reverse_steps: usize,
    /// Scalar clean value and corrupted value of the illustrated process.
    pub x0: f64,
    pub y: f64,
    /// Mixture for the SNR-of-mean curves.
    pub mixture: ManifestEntry,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self {
            gammas: vec![0.5, 1.5, 5.0],
            n_paths: 10,
            grid_points: 101,
            substeps: 10,
            reverse_steps: 200,
            x0: 1.0,
            y: 0.0,
            mixture: ManifestEntry {
                seed: 1,
                clean: CleanKind::Harmonic,
                noise: NoiseKind::White,
                snr_db: 5.0,
                duration_s: 1.0,
                t60_s: 0.0,
            },
        }
    }
}

/// Per-gamma results of a simulate run.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaCurve {
    pub gamma: f64,
    pub t: Vec<f64>,
    /// SNR of the process mean against the clean mixture component.
    pub snr_db: Vec<f64>,
    /// SNR of the mixture itself.
    pub mixture_snr_db: f64,
    /// Mean and spread of the reverse paths at `t_eps`, next to the kernel values there.
    pub reverse_mean: f64,
    pub reverse_std: f64,
    pub mean_t_eps: f64,
    pub sigma_t_eps: f64,
    pub envelope_csv: PathBuf,
}

fn label(gamma: f64) -> String {
    format!("gamma_{gamma}")
}

fn column_names(n: usize) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain((0..n).map(|i| format!("path_{i}")))
        .collect()
}

fn forward_paths(opts: &SimulateOptions, t: &[f64], p: &SdeParams, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = item_stream(seed, "simulate-forward", p.gamma.to_bits());
    let n = opts.n_paths;
    let mut x = ComplexSpectrogram::filled(n, Complex64::new(opts.x0, 0.0));
    let mut rows = vec![x.data().iter().map(|c| c.re).collect::<Vec<_>>()];
    for w in t.windows(2) {
        let dt = (w[1] - w[0]) / opts.substeps as f64;
        for k in 0..opts.substeps {
            let s = w[0] + k as f64 * dt;
            let g = sde::diffusion_coeff(s, p)?;
            let z = sample_complex_gaussian(1, n, g * dt.sqrt(), p.noise, &mut rng);
            for (xv, zv) in x.data_mut().iter_mut().zip(z.data()) {
                *xv += p.gamma * (opts.y - *xv) * dt + zv;
            }
        }
        rows.push(x.data().iter().map(|c| c.re).collect());
    }
    Ok(rows)
}

struct Reverse {
    t: Vec<f64>,
    rows: Vec<Vec<f64>>,
    terminal: ComplexSpectrogram,
}

fn reverse_paths(opts: &SimulateOptions, p: &SdeParams, seed: u64) -> Result<Reverse> {
    let mut rng = item_stream(seed, "simulate-reverse", p.gamma.to_bits());
    let n = opts.n_paths.max(2);
    let x0 = ComplexSpectrogram::filled(n, Complex64::new(opts.x0, 0.0));
    let y = ComplexSpectrogram::filled(n, Complex64::new(opts.y, 0.0));
    let oracle = AnalyticOracle::new(x0, *p);
    let mut x = sde::sample_prior(&y, p, &mut rng);
    let steps = opts.reverse_steps.max(1);
    let span = p.t_horizon - p.t_eps;
    let time = |i: usize| if i == steps { p.t_eps } else { p.t_horizon - span * i as f64 / steps as f64 };
    let mut t = vec![p.t_horizon];
    let mut rows = vec![x.data().iter().map(|c| c.re).collect::<Vec<_>>()];
    for i in 0..steps {
        x = em_predictor_step(&x, &y, time(i), time(i) - time(i + 1), &oracle, p, &mut rng)?;
        t.push(time(i + 1));
        rows.push(x.data().iter().map(|c| c.re).collect());
    }
    Ok(Reverse { t, rows, terminal: x })
}

fn write_paths(path: &Path, t: &[f64], rows: &[Vec<f64>], n: usize) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(column_names(n)).map_err(csv_error)?;
    for (ti, row) in t.iter().zip(rows) {
        let rec = std::iter::once(ti.to_string()).chain(row.iter().take(n).map(f64::to_string));
        w.write_record(rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes, for every gamma, the scalar mean/std envelope with the SNR of the
/// process mean on a synthetic mixture, forward sample paths, and reverse
/// paths driven by the analytic score. Returns the per-gamma curves.
///
/// Files: `envelope_gamma_<g>.csv` (t, mean_real, mean_imag, std, snr_db,
/// gamma), `forward_gamma_<g>.csv` and `reverse_gamma_<g>.csv` (t, path_i),
/// plus `summary.csv` with one row per gamma.
pub fn cmd_simulate(cfg: &RunConfig, opts: &SimulateOptions, out_dir: &Path) -> Result<Vec<GammaCurve>> {
    if opts.gammas.is_empty() || opts.grid_points < 2 || opts.substeps == 0 {
        return Err(Error::InvalidParam("need at least one gamma, two grid points and one substep".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let pair = generate_pair(&opts.mixture)?;
    let mixture_snr_db = snr_db(&pair.clean, &pair.noise)?;
    let horizon = cfg.sde.t_horizon;
    let last = opts.grid_points - 1;
    let t: Vec<f64> = (0..opts.grid_points)
        .map(|i| if i == last { horizon } else { horizon * i as f64 / last as f64 })
        .collect();
    let x0 = ComplexSpectrogram::filled(1, Complex64::new(opts.x0, 0.0));
    let y = ComplexSpectrogram::filled(1, Complex64::new(opts.y, 0.0));

    let mut curves = Vec::with_capacity(opts.gammas.len());
    for &gamma in &opts.gammas {
        let p = cfg.sde.with_gamma(gamma);
        p.validate()?;
        let snr = sde::snr_of_mean(&pair.clean, &pair.noisy, &t, &p, &cfg.transform)?;

        let envelope_csv = out_dir.join(format!("envelope_{}.csv", label(gamma)));
        let mut w = csv_writer(&envelope_csv)?;
        w.write_record(["t", "mean_real", "mean_imag", "std", "snr_db", "gamma"])
            .map_err(csv_error)?;
        for (&ti, &(_, s)) in t.iter().zip(&snr) {
            let m = sde::mean(&x0, &y, ti, &p)?.get(0, 0);
            let sd = sde::sigma(ti, &p)?;
            w.write_record([ti, m.re, m.im, sd, s, gamma].map(|v| v.to_string()))
                .map_err(csv_error)?;
        }
        w.flush()?;

        let forward = forward_paths(opts, &t, &p, cfg.seed())?;
        write_paths(&out_dir.join(format!("forward_{}.csv", label(gamma))), &t, &forward, opts.n_paths)?;
        let reverse = reverse_paths(opts, &p, cfg.seed())?;
        write_paths(
            &out_dir.join(format!("reverse_{}.csv", label(gamma))),
            &reverse.t,
            &reverse.rows,
            opts.n_paths,
        )?;

        let n = reverse.terminal.len() as f64;
        let mean_c = reverse.terminal.data().iter().sum::<Complex64>() / n;
        let var = reverse.terminal.data().iter().map(|c| (c - mean_c).norm_sqr()).sum::<f64>() / (n - 1.0);
        let mu_eps = sde::mean(&x0, &y, p.t_eps, &p)?.get(0, 0).re;
        curves.push(GammaCurve {
            gamma,
            t: t.clone(),
            snr_db: snr.iter().map(|&(_, s)| s).collect(),
            mixture_snr_db,
            reverse_mean: mean_c.re,
            reverse_std: var.sqrt(),
            mean_t_eps: mu_eps,
            sigma_t_eps: sde::sigma(p.t_eps, &p)?,
            envelope_csv,
        });
    }

    let mut w = csv_writer(&out_dir.join("summary.csv"))?;
    w.write_record([
        "gamma",
        "mixture_snr_db",
        "snr_db_at_t",
        "mismatch_db",
        "reverse_mean",
        "mean_t_eps",
        "reverse_std",
        "sigma_t_eps",
    ])
    .map_err(csv_error)?;
    for c in &curves {
        let end = *c.snr_db.last().expect("grid has points");
        w.write_record(
            [
                c.gamma,
                c.mixture_snr_db,
                end,
                end - c.mixture_snr_db,
                c.reverse_mean,
                c.mean_t_eps,
                c.reverse_std,
                c.sigma_t_eps,
            ]
            .map(|v| v.to_string()),
        )
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(curves)
}

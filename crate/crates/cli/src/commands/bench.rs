use std::path::Path;

use ouve_core::metrics::MetricReport;
use ouve_core::sampler::{enhance, SamplerConfig, SamplerKind};
use ouve_core::score::ScoreModel;
use ouve_core::{Error, Result};

use super::enhance::{load_net, oracle_for};
use super::{cell, csv_error, csv_writer, load_dataset};
use crate::RunConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub sampler: &'static str,
    pub settings: String,
    pub nfe: u64,
    pub rtf: f64,
    pub si_sdr: f64,
    pub si_sir: Option<f64>,
    pub si_sar: Option<f64>,
    pub file: String,
    /// `net` or `oracle`.
    pub model: &'static str,
}

/// PC with 0, 1 and 2 corrector steps, then the ODE sampler at
/// `atol = rtol = 1e-1` and at `atol = 1e-6, rtol = 1e-3`. Other settings
/// come from `base`.
pub fn default_grid(base: &SamplerConfig) -> Vec<SamplerConfig> {
    let pc = |c| SamplerConfig {
        kind: SamplerKind::Pc,
        corrector_steps: c,
        ..*base
    };
    let ode = |atol, rtol| SamplerConfig {
        kind: SamplerKind::Ode,
        atol,
        rtol,
        ..*base
    };
    vec![pc(0), pc(1), pc(2), ode(1e-1, 1e-1), ode(1e-6, 1e-3)]
}

/// One sampler configuration per non-empty line, each a list of
/// whitespace-separated `key=value` settings applied on top of `base`.
///
/// ```text
/// sampler=pc corrector_steps=2
/// sampler=ode atol=1e-1 rtol=1e-1
/// ```
pub fn parse_grid(text: &str, base: &RunConfig) -> Result<Vec<SamplerConfig>> {
    let mut grid = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut cfg = base.clone();
        cfg.apply_tokens(line)
            .and_then(|_| cfg.validate())
            .map_err(|e| Error::Config(format!("grid line {}: {}", i + 1, e.to_string().trim_start_matches("config: "))))?;
        grid.push(cfg.sampler);
    }
    if grid.is_empty() {
        return Err(Error::Config("empty sampler grid".into()));
    }
    Ok(grid)
}

/// Enhances every dataset item with every grid configuration and scores the
/// result. Without `weights` the analytic score of each item's clean
/// reference is used and rows are labelled `oracle`.
///
/// CSV columns: sampler, settings, nfe, rtf, si_sdr, si_sir, si_sar, file,
/// model. One row per configuration and item.
pub fn cmd_bench(
    cfg: &RunConfig,
    dataset_dir: &Path,
    grid: &[SamplerConfig],
    weights: Option<&Path>,
    out_csv: &Path,
) -> Result<Vec<BenchRow>> {
    let items = load_dataset(dataset_dir)?;
    let net = weights.map(|w| load_net(cfg, w)).transpose()?;
    let model_label = if net.is_some() { "net" } else { "oracle" };
    let mut rows = Vec::with_capacity(grid.len() * items.len());
    for sampler in grid {
        for item in &items {
            let oracle;
            let model: &dyn ScoreModel = match &net {
                Some(n) => n,
                None => {
                    oracle = oracle_for(cfg, &item.clean, &item.noisy)?;
                    oracle.as_ref()
                }
            };
            let (x, stats) = enhance(&item.noisy, model, sampler, &cfg.sde, &cfg.transform)?;
            let report = MetricReport::compute(&x, &item.clean, item.noise.as_ref())?;
            rows.push(BenchRow {
                sampler: sampler.kind.as_str(),
                settings: sampler.settings(),
                nfe: stats.nfe,
                rtf: stats.rtf,
                si_sdr: report.si_sdr,
                si_sir: report.si_sir,
                si_sar: report.si_sar,
                file: item.name.clone(),
                model: model_label,
            });
        }
    }

    let mut w = csv_writer(out_csv)?;
    w.write_record(["sampler", "settings", "nfe", "rtf", "si_sdr", "si_sir", "si_sar", "file", "model"])
        .map_err(csv_error)?;
    for r in &rows {
        w.write_record([
            r.sampler.to_string(),
            r.settings.clone(),
            r.nfe.to_string(),
            r.rtf.to_string(),
            r.si_sdr.to_string(),
            cell(r.si_sir),
            cell(r.si_sar),
            r.file.clone(),
            r.model.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(rows)
}

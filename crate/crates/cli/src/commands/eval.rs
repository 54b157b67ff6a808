use std::path::Path;

use ouve_core::audio::read_wav;
use ouve_core::metrics::{snr_db, MetricReport};
use ouve_core::{Error, Result};

use super::{cell, csv_error, csv_writer, wav_files};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub file: String,
    pub si_sdr: f64,
    pub si_sir: Option<f64>,
    pub si_sar: Option<f64>,
    /// SNR of the reference against the noise file.
    pub snr_in: Option<f64>,
    /// Output SNR (reference over `est - ref`) minus `snr_in`.
    pub snr_gain: Option<f64>,
}

/// Scores every WAV in `est_dir` against the file of the same name in
/// `ref_dir`. With `noise_dir`, interference and artifact ratios and the SNR
/// gain are filled in as well.
///
/// CSV columns: file, si_sdr, si_sir, si_sar, snr_in, snr_gain.
pub fn cmd_eval(est_dir: &Path, ref_dir: &Path, noise_dir: Option<&Path>, out_csv: &Path) -> Result<Vec<EvalRow>> {
    let files = wav_files(est_dir)?;
    if files.is_empty() {
        return Err(Error::InvalidParam(format!("no WAV files in {}", est_dir.display())));
    }
    let rows = files
        .iter()
        .map(|est_path| {
            let name = est_path.file_name().expect("listed files have names");
            let est = read_wav(est_path)?;
            let reference = read_wav(&ref_dir.join(name))?;
            let noise = noise_dir.map(|d| read_wav(&d.join(name))).transpose()?;
            let report = MetricReport::compute(&est, &reference, noise.as_ref())?;
            let snr_in = noise.as_ref().map(|n| snr_db(&reference, n)).transpose()?;
            Ok(EvalRow {
                file: name.to_string_lossy().into_owned(),
                si_sdr: report.si_sdr,
                si_sir: report.si_sir,
                si_sar: report.si_sar,
                snr_in,
                snr_gain: snr_in.zip(report.snr).map(|(i, o)| o - i),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut w = csv_writer(out_csv)?;
    w.write_record(["file", "si_sdr", "si_sir", "si_sar", "snr_in", "snr_gain"])
        .map_err(csv_error)?;
    for r in &rows {
        w.write_record([
            r.file.clone(),
            r.si_sdr.to_string(),
            cell(r.si_sir),
            cell(r.si_sar),
            cell(r.snr_in),
            cell(r.snr_gain),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(rows)
}

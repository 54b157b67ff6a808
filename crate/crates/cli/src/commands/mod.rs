//! Subcommand implementations.

mod bench;
mod dataset;
mod enhance;
mod eval;
mod mix;
mod simulate;
mod train;

pub use bench::{cmd_bench, default_grid, parse_grid, BenchRow};
pub use dataset::{load_dataset, wav_files, Item};
pub use enhance::{cmd_enhance, EnhanceReport, ModelSource};
pub use eval::{cmd_eval, EvalRow};
pub use mix::{cmd_mix, MixSummary};
pub use simulate::{cmd_simulate, GammaCurve, SimulateOptions};
pub use train::cmd_train;

use std::path::Path;

use ouve_core::{Error, Result};

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    csv::Writer::from_path(path).map_err(csv_error)
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.into())
}

/// Formats an optional value for a CSV cell; `None` is an empty cell.
pub(crate) fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

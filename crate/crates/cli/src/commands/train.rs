use std::path::Path;

use ouve_core::rng::substream;
use ouve_core::score::{save_weights, train, TinyScoreNet, TrainConfig, TrainReport};
use ouve_core::spectral::{compress, Stft};
use ouve_core::{Error, Result};

use super::{csv_error, csv_writer, load_dataset};
use crate::RunConfig;

/// Trains the default network on `dataset_dir` and writes the weights.
///
/// With `epochs` set, the step count is `epochs` passes of
/// `ceil(items / batch_size)` steps; otherwise `cfg.train.steps` is used.
/// Initialisation and batching draw from the `train` substream of the seed.
pub fn cmd_train(
    cfg: &RunConfig,
    dataset_dir: &Path,
    epochs: Option<usize>,
    out_weights: &Path,
    loss_csv: Option<&Path>,
    on_step: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    let items = load_dataset(dataset_dir)?;
    let engine = Stft::new();
    let data = items
        .iter()
        .map(|it| {
            Ok((
                compress(&engine.stft(&it.clean)?, &cfg.transform)?,
                compress(&engine.stft(&it.noisy)?, &cfg.transform)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let steps = match epochs {
        Some(0) => return Err(Error::InvalidParam("epochs must be at least 1".into())),
        Some(e) => e * data.len().div_ceil(cfg.train.batch_size),
        None => cfg.train.steps,
    };
    let tc = TrainConfig { steps, ..cfg.train };
    let mut rng = substream(cfg.seed(), "train");
    let mut net = TinyScoreNet::default_architecture(cfg.sde, &mut rng);
    let report = train(&mut net, &data, &tc, &mut rng, on_step)?;
    if let Some(dir) = out_weights.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_weights(&net, out_weights)?;
    if let Some(path) = loss_csv {
        let mut w = csv_writer(path)?;
        w.write_record(["step", "loss"]).map_err(csv_error)?;
        for (i, l) in report.losses.iter().enumerate() {
            w.write_record([i.to_string(), l.to_string()]).map_err(csv_error)?;
        }
        w.flush()?;
    }
    Ok(report)
}

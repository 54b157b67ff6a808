use std::path::{Path, PathBuf};

use ouve_core::audio::read_wav;
use ouve_core::spectral::Waveform;
use ouve_core::{Error, Result};

/// One dataset item as laid out by `mix`: `{clean,noisy,noise}/<name>`.
#[derive(Debug, Clone)]
pub struct Item {
    pub name: String,
    pub clean: Waveform,
    pub noisy: Waveform,
    pub noise: Option<Waveform>,
}

/// `.wav` files directly inside `dir`, sorted by name.
pub fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("cannot list {}: {e}", dir.display())))
    })?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Loads every item under `dir/noisy` together with its clean reference and,
/// when present, its noise file.
pub fn load_dataset(dir: &Path) -> Result<Vec<Item>> {
    let noisy_files = wav_files(&dir.join("noisy"))?;
    if noisy_files.is_empty() {
        return Err(Error::InvalidParam(format!("no WAV files in {}", dir.join("noisy").display())));
    }
    noisy_files
        .into_iter()
        .map(|noisy_path| {
            let file = noisy_path.file_name().expect("listed files have names").to_owned();
            let clean_path = dir.join("clean").join(&file);
            if !clean_path.is_file() {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("missing clean reference {}", clean_path.display()),
                )));
            }
            let noise_path = dir.join("noise").join(&file);
            let item = Item {
                name: file.to_string_lossy().into_owned(),
                clean: read_wav(&clean_path)?,
                noisy: read_wav(&noisy_path)?,
                noise: noise_path.is_file().then(|| read_wav(&noise_path)).transpose()?,
            };
            if item.clean.len() != item.noisy.len() {
                return Err(Error::LengthMismatch {
                    left: item.clean.len(),
                    right: item.noisy.len(),
                });
            }
            Ok(item)
        })
        .collect()
}

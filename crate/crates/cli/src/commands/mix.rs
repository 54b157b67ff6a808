use std::path::Path;

use ouve_core::audio::{generate_pair, parse_manifest, write_wav};
use ouve_core::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MixSummary {
    pub items: usize,
    /// Samples clipped to 16-bit range across all written files.
    pub clipped: usize,
}

/// Renders every manifest entry into `out_dir/{clean,noisy,noise}/item_NNNN.wav`
/// and copies the manifest alongside.
pub fn cmd_mix(manifest: &Path, out_dir: &Path) -> Result<MixSummary> {
    let text = std::fs::read_to_string(manifest)?;
    let entries = parse_manifest(&text)?;
    for sub in ["clean", "noisy", "noise"] {
        std::fs::create_dir_all(out_dir.join(sub))?;
    }
    let mut clipped = 0;
    for (i, entry) in entries.iter().enumerate() {
        let pair = generate_pair(entry)?;
        let name = format!("item_{i:04}.wav");
        clipped += write_wav(&out_dir.join("clean").join(&name), &pair.clean)?;
        clipped += write_wav(&out_dir.join("noisy").join(&name), &pair.noisy)?;
        clipped += write_wav(&out_dir.join("noise").join(&name), &pair.noise)?;
    }
    let rendered: String = entries.iter().map(|e| e.render() + "\n").collect();
    std::fs::write(out_dir.join("manifest.csv"), rendered)?;
    Ok(MixSummary {
        items: entries.len(),
        clipped,
    })
}

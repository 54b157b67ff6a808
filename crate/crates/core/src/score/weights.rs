//! Binary weights format.
//!
//! Layout, little-endian: magic `OUVE`, `u32` format version, `u32` layer
//! count, `u32` layer sizes (count + 1 of them), the `f64` parameters, then a
//! `u64` FNV-1a checksum of everything before it. Version 1 fixes the patch
//! width, embedding size and SiLU activation.

use std::fs;
use std::path::Path;

use super::net::{Activation, TinyScoreNet};
use crate::error::{Error, Result};
use crate::rng::fnv1a64;
use crate::sde::SdeParams;

pub const WEIGHTS_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"OUVE";

pub fn save_weights(net: &TinyScoreNet, path: &Path) -> Result<()> {
    if net.activation() != Activation::Silu {
        return Err(Error::Weights("only SiLU networks can be saved".into()));
    }
    let sizes = net.sizes();
    let mut buf = Vec::with_capacity(16 + 4 * sizes.len() + 8 * net.param_count());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    buf.extend_from_slice(&((sizes.len() - 1) as u32).to_le_bytes());
    for &s in sizes {
        buf.extend_from_slice(&(s as u32).to_le_bytes());
    }
    for p in net.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    let sum = fnv1a64(&buf);
    buf.extend_from_slice(&sum.to_le_bytes());
    fs::write(path, buf)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Weights(format!("truncated while reading {what}")))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

/// Reads a network written by [`save_weights`]. The SDE parameters are not
/// stored and come from the caller.
pub fn load_weights(path: &Path, sde: SdeParams) -> Result<TinyScoreNet> {
    let buf = fs::read(path)?;
    let mut r = Reader { buf: &buf, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Weights(format!("{} is not a weights file", path.display())));
    }
    let version = r.u32("version")?;
    if version != WEIGHTS_VERSION {
        return Err(Error::WeightsVersion {
            found: version,
            expected: WEIGHTS_VERSION,
        });
    }
    let layers = r.u32("layer count")? as usize;
    if layers == 0 || layers > 64 {
        return Err(Error::Weights(format!("implausible layer count {layers}")));
    }
    let sizes = (0..=layers)
        .map(|_| r.u32("layer sizes").map(|s| s as usize))
        .collect::<Result<Vec<_>>>()?;
    let count: usize = sizes.windows(2).map(|p| p[0] * p[1] + p[1]).sum();
    let raw = r.take(count.saturating_mul(8), "parameters")?;
    let params = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let body_end = r.pos;
    let stored = u64::from_le_bytes(r.take(8, "checksum")?.try_into().expect("8 bytes"));
    if r.pos != buf.len() {
        return Err(Error::Weights(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    if fnv1a64(&buf[..body_end]) != stored {
        return Err(Error::Weights("checksum mismatch".into()));
    }
    TinyScoreNet::from_parts(sizes, params, Activation::Silu, sde)
}

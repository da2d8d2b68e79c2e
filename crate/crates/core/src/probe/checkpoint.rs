//! PRB1 probe checkpoints.
//!
//! ```text
//! "PRB1" | u32 n_classes | u32 dim | f32 W[n_classes*dim] (row-major)
//!        | f32 b[n_classes] | u64 footer length L | L bytes of JSON footer
//! ```
//!
//! All values little-endian. The footer records the label space (task,
//! ordered classes, and its SHA-256 digest) and, when the probe was trained,
//! the [`TrainConfig`]. Parameters are stored as `f32`, so a loaded probe
//! equals the saved one rounded to single precision.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::{LinearProbe, TrainConfig};
use crate::store::LabelSpace;

pub const PROBE_MAGIC: &[u8; 4] = b"PRB1";

#[derive(Debug, Serialize, Deserialize)]
struct Footer {
    task: String,
    classes: Vec<String>,
    labelspace_hash: String,
    config: Option<TrainConfig>,
}

pub fn encode_probe(probe: &LinearProbe, config: Option<&TrainConfig>) -> Result<Vec<u8>> {
    let space = probe.labelspace();
    let footer = serde_json::to_vec(&Footer {
        task: space.task().to_owned(),
        classes: space.classes().to_vec(),
        labelspace_hash: space.digest(),
        config: config.cloned(),
    })?;
    let n = u32::try_from(probe.n_classes()).map_err(|_| Error::invariant("too many classes"))?;
    let d = u32::try_from(probe.dim()).map_err(|_| Error::invariant("dim too large"))?;
    let mut out = Vec::with_capacity(12 + 4 * (probe.weights().len() + probe.bias().len()) + 8 + footer.len());
    out.extend_from_slice(PROBE_MAGIC);
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    for &x in probe.weights().iter().chain(probe.bias()) {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    out.extend_from_slice(&(footer.len() as u64).to_le_bytes());
    out.extend_from_slice(&footer);
    Ok(out)
}

pub fn decode_probe(bytes: &[u8]) -> Result<(LinearProbe, Option<TrainConfig>)> {
    let truncated = || Error::format("truncated probe checkpoint");
    if bytes.len() < 12 {
        return Err(truncated());
    }
    if &bytes[..4] != PROBE_MAGIC {
        return Err(Error::format(format!("bad magic {:?}, expected \"PRB1\"", &bytes[..4])));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let n_params = n
        .checked_mul(d)
        .and_then(|w| w.checked_add(n))
        .ok_or_else(|| Error::format("parameter count overflows"))?;
    let params_end = 12 + n_params * 4;
    let len_end = params_end + 8;
    if bytes.len() < len_end {
        return Err(truncated());
    }
    let params: Vec<f64> = bytes[12..params_end]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    let footer_len = u64::from_le_bytes(bytes[params_end..len_end].try_into().unwrap()) as usize;
    if bytes.len() != len_end + footer_len {
        return Err(if bytes.len() < len_end + footer_len {
            truncated()
        } else {
            Error::format("trailing bytes after probe footer")
        });
    }
    let footer: Footer = serde_json::from_slice(&bytes[len_end..])?;
    let space = LabelSpace::new(footer.task, footer.classes)?;
    if space.digest() != footer.labelspace_hash {
        return Err(Error::format("label space digest does not match its classes"));
    }
    if space.len() != n {
        return Err(Error::format(format!(
            "checkpoint has {n} classes but its label space lists {}",
            space.len()
        )));
    }
    let (w, b) = params.split_at(n * d);
    let probe = LinearProbe::from_parts(space, d, w.to_vec(), b.to_vec())?;
    Ok((probe, footer.config))
}

pub fn save_probe(probe: &LinearProbe, config: Option<&TrainConfig>, path: &Path) -> Result<()> {
    fs::write(path, encode_probe(probe, config)?)?;
    Ok(())
}

pub fn load_probe(path: &Path) -> Result<(LinearProbe, Option<TrainConfig>)> {
    decode_probe(&fs::read(path)?)
}

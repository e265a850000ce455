//! Model files: an 8-byte magic, a little-endian `u32` format version, the
//! network configuration as length-prefixed JSON, then the model state
//! (parameters and normalization statistics) as a count-prefixed run of
//! little-endian `f32`.

use std::path::Path;

use super::unet::{NetworkConfig, UNet};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DITWPCNN";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode_model(model: &UNet<f32>) -> Result<Vec<u8>> {
    let config = serde_json::to_vec(model.config())?;
    let state = model.state();
    let mut out = Vec::with_capacity(24 + config.len() + 4 * state.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&(state.len() as u64).to_le_bytes());
    for v in state {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn save_model(model: &UNet<f32>, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, &encode_model(model)?)
}

struct Reader<'a> {
    bytes: &'a [u8],
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::CorruptCheckpoint {
                path: self.path.to_path_buf(),
                reason: format!("file ends inside the {what}"),
            });
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

/// Parses a model file. `path` is only used in error messages.
pub fn decode_model(bytes: &[u8], path: &Path) -> Result<UNet<f32>> {
    let corrupt = |reason: String| Error::CorruptCheckpoint {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = Reader { bytes, path };
    if r.take(8, "header")? != MAGIC {
        return Err(corrupt("not a model file (bad magic)".into()));
    }
    let version = r.u32("header")?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let len = r.u32("header")? as usize;
    let config: NetworkConfig = serde_json::from_slice(r.take(len, "network configuration")?)
        .map_err(|e| corrupt(format!("unreadable network configuration: {e}")))?;
    let mut model = UNet::<f32>::new(config)?;
    let count = u64::from_le_bytes(r.take(8, "state header")?.try_into().expect("8 bytes")) as usize;
    if count != model.state_len() {
        return Err(corrupt(format!(
            "holds {count} values but the stored configuration needs {}",
            model.state_len()
        )));
    }
    let raw = r.take(4 * count, "weights")?;
    if !r.bytes.is_empty() {
        return Err(corrupt(format!("{} unexpected trailing bytes", r.bytes.len())));
    }
    let state: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    model.load_state(&state)?;
    Ok(model)
}

pub fn load_model(path: &Path) -> Result<UNet<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes, path)
}

/// Loads a model and checks it has the expected architecture (the
/// initialization seed is ignored).
pub fn load_model_expecting(path: &Path, expected: &NetworkConfig) -> Result<UNet<f32>> {
    let model = load_model(path)?;
    let found = model.config();
    let same = NetworkConfig {
        init_seed: expected.init_seed,
        ..found.clone()
    } == *expected;
    if !same {
        return Err(Error::ArchitectureMismatch {
            found: found.describe(),
            expected: expected.describe(),
        });
    }
    Ok(model)
}

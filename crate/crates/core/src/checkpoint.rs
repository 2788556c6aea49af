//! Versioned binary checkpoint: header, flat-config echo, named parameter arrays, checksum.
//!
//! ```text
//! "TPPOCKPT" | u32 version
//! u32 len | config text (key = value lines)
//! u32 count | { u16 len | name | u32 rows | u32 cols | f64 * rows * cols }
//! u64 FNV-1a of everything above
//! ```
//! All integers and floats are little-endian.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use crate::config::{FlatConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};

const MAGIC: &[u8; 8] = b"TPPOCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3))
}

pub fn encode_checkpoint(params: &ModelParams, cfg: &TrainConfig) -> Result<Vec<u8>> {
    if params.config != cfg.model {
        return Err(Error::Config("model config of parameters and training config differ".into()));
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.write_u32::<LittleEndian>(CHECKPOINT_VERSION).expect("vec write");
    let text = cfg.to_flat().to_text();
    buf.write_u32::<LittleEndian>(text.len() as u32).expect("vec write");
    buf.extend_from_slice(text.as_bytes());
    buf.write_u32::<LittleEndian>(params.store.len() as u32).expect("vec write");
    for (_, name, value) in params.store.iter() {
        buf.write_u16::<LittleEndian>(name.len() as u16).expect("vec write");
        buf.extend_from_slice(name.as_bytes());
        buf.write_u32::<LittleEndian>(value.nrows() as u32).expect("vec write");
        buf.write_u32::<LittleEndian>(value.ncols() as u32).expect("vec write");
        for x in value.iter() {
            buf.write_f64::<LittleEndian>(*x).expect("vec write");
        }
    }
    let sum = fnv1a(&buf);
    buf.write_u64::<LittleEndian>(sum).expect("vec write");
    Ok(buf)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelParams, TrainConfig)> {
    let err = |section: &'static str, msg: &str| Error::Checkpoint {
        section,
        msg: msg.to_string(),
    };
    let mut r = Cursor::new(bytes);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| err("header", "file too short"))?;
    if &magic != MAGIC {
        return Err(err("header", "not a checkpoint file"));
    }
    let version = r.read_u32::<LittleEndian>().map_err(|_| err("header", "truncated"))?;
    if version != CHECKPOINT_VERSION {
        return Err(err(
            "header",
            &format!("version {version} does not match supported version {CHECKPOINT_VERSION}"),
        ));
    }

    let len = r.read_u32::<LittleEndian>().map_err(|_| err("config", "truncated"))? as usize;
    let mut text = vec![0u8; len.min(bytes.len())];
    r.read_exact(&mut text).map_err(|_| err("config", "truncated"))?;
    if text.len() != len {
        return Err(err("config", "truncated"));
    }
    let text = String::from_utf8(text).map_err(|_| err("config", "not UTF-8"))?;
    let cfg = FlatConfig::parse(&text)
        .and_then(|f| TrainConfig::from_flat(&f))
        .map_err(|e| err("config", &e.to_string()))?;

    let count = r.read_u32::<LittleEndian>().map_err(|_| err("params", "truncated"))? as usize;
    let mut named = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let nlen = r.read_u16::<LittleEndian>().map_err(|_| err("params", "truncated"))? as usize;
        let mut name = vec![0u8; nlen];
        r.read_exact(&mut name).map_err(|_| err("params", "truncated"))?;
        let name = String::from_utf8(name).map_err(|_| err("params", "parameter name not UTF-8"))?;
        let rows = r.read_u32::<LittleEndian>().map_err(|_| err("params", "truncated"))? as usize;
        let cols = r.read_u32::<LittleEndian>().map_err(|_| err("params", "truncated"))? as usize;
        let remaining = bytes.len() - r.position() as usize;
        if rows.saturating_mul(cols).saturating_mul(8) > remaining {
            return Err(err("params", &format!("truncated in '{name}'")));
        }
        let mut data = vec![0f64; rows * cols];
        r.read_f64_into::<LittleEndian>(&mut data)
            .map_err(|_| err("params", &format!("truncated in '{name}'")))?;
        let value = Array2::from_shape_vec((rows, cols), data).map_err(|e| err("params", &e.to_string()))?;
        named.push((name, value));
    }

    let body_end = r.position() as usize;
    let stored = r.read_u64::<LittleEndian>().map_err(|_| err("trailer", "missing checksum"))?;
    if stored != fnv1a(&bytes[..body_end]) {
        return Err(err("trailer", "checksum mismatch"));
    }
    if r.position() as usize != bytes.len() {
        return Err(err("trailer", "trailing bytes after checksum"));
    }

    let params = ModelParams::from_named(&cfg.model, named).map_err(|e| err("params", &e.to_string()))?;
    Ok((params, cfg))
}

pub fn save_checkpoint(params: &ModelParams, cfg: &TrainConfig, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(params, cfg)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, TrainConfig)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Rejects a checkpoint whose horizons differ from the ones requested for evaluation.
pub fn ensure_horizons(model: &ModelConfig, obs_len: usize, pred_len: usize) -> Result<()> {
    if model.obs_len != obs_len || model.pred_len != pred_len {
        return Err(Error::Config(format!(
            "checkpoint was trained for obs_len={} pred_len={}, requested obs_len={obs_len} pred_len={pred_len}",
            model.obs_len, model.pred_len
        )));
    }
    Ok(())
}

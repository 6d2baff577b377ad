//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"RVNC"
//! version u32                  (currently 1)
//! config  u64 length + UTF-8   (TOML of NetConfig)
//! meta    u64 length + UTF-8   (free-form caller string, may be empty)
//! count   u64                  (number of tensors)
//! tensor  u64 name length + UTF-8 name
//!         u64 rows, u64 cols
//!         rows*cols f64 values
//! ```
//!
//! Values are stored as raw IEEE-754 bits, so a save/load round trip is
//! lossless and reload reproduces bitwise-identical network outputs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::nn::policy::{NetConfig, PolicyNet};
use crate::nn::tensor::Tensor;

const MAGIC: &[u8; 4] = b"RVNC";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("config does not parse: {0}")]
    BadConfig(String),
    #[error("tensor {name}: expected shape {expect:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expect: (usize, usize),
        found: (usize, usize),
    },
    #[error("tensor missing from checkpoint: {0}")]
    MissingTensor(String),
    #[error("unknown tensor in checkpoint: {0}")]
    UnknownTensor(String),
}

fn write_bytes(w: &mut impl Write, bytes: &[u8]) -> std::io::Result<()> {
    w.write_all(&(bytes.len() as u64).to_le_bytes())?;
    w.write_all(bytes)
}

fn read_u64(r: &mut impl Read) -> Result<u64, CheckpointError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_string(r: &mut impl Read) -> Result<String, CheckpointError> {
    let len = read_u64(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| CheckpointError::Malformed(e.to_string()))
}

/// Save a network plus a free-form metadata string.
pub fn save(path: &Path, net: &PolicyNet, meta: &str) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let cfg = toml::to_string(&net.cfg).expect("NetConfig serializes");
    write_bytes(&mut w, cfg.as_bytes())?;
    write_bytes(&mut w, meta.as_bytes())?;
    let named = net.params.named();
    w.write_all(&(named.len() as u64).to_le_bytes())?;
    for (name, t) in named {
        write_bytes(&mut w, name.as_bytes())?;
        w.write_all(&(t.rows() as u64).to_le_bytes())?;
        w.write_all(&(t.cols() as u64).to_le_bytes())?;
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Load a network and the metadata string stored with it.
pub fn load(path: &Path) -> Result<(PolicyNet, String), CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut vbuf = [0u8; 4];
    r.read_exact(&mut vbuf)?;
    let version = u32::from_le_bytes(vbuf);
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let cfg: NetConfig = toml::from_str(&read_string(&mut r)?)
        .map_err(|e| CheckpointError::BadConfig(e.to_string()))?;
    let meta = read_string(&mut r)?;
    let count = read_u64(&mut r)? as usize;

    let mut net = PolicyNet::new(cfg, 0);
    let mut seen: Vec<String> = Vec::with_capacity(count);
    for _ in 0..count {
        let name = read_string(&mut r)?;
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        let mut data = vec![0.0f64; rows * cols];
        let mut buf = [0u8; 8];
        for v in &mut data {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        let tensor = Tensor::from_vec(rows, cols, data);
        let mut named = net.params.named_mut();
        let slot = named
            .iter_mut()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| CheckpointError::UnknownTensor(name.clone()))?;
        if slot.1.shape() != tensor.shape() {
            return Err(CheckpointError::ShapeMismatch {
                name,
                expect: slot.1.shape(),
                found: tensor.shape(),
            });
        }
        *slot.1 = tensor;
        seen.push(name);
    }
    for (name, _) in net.params.named() {
        if !seen.contains(&name) {
            return Err(CheckpointError::MissingTensor(name));
        }
    }
    Ok((net, meta))
}

//! Binary checkpoint: header, tensor records, trailing FNV-1a checksum.
//!
//! All integers and reals are little-endian. Layout:
//! `TGPPOCK1`, u32 format version, u32 feature schema version, the config
//! (u32 d_h, u32 layers, u32 heads, f64 dropout, u32 gate depth, u32 width
//! count + u32 widths, u64 seed), u32 tensor count, then per tensor u32 name
//! length + UTF-8 name, u32 rows, u32 cols, row-major f64 values, and finally
//! a u64 checksum of every preceding byte.

use super::model::{NamedTensor, NetConfig, PolicyParameters};
use super::tape::Mat;
use crate::features::FEATURE_SCHEMA_VERSION;
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"TGPPOCK1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("BAD_MAGIC: not a checkpoint file")]
    BadMagic,
    #[error("UNSUPPORTED_VERSION: format {0}")]
    UnsupportedVersion(u32),
    #[error("SCHEMA_MISMATCH: checkpoint uses feature schema {found}, this build uses {expected}")]
    SchemaMismatch { found: u32, expected: u32 },
    #[error("CHECKSUM_MISMATCH")]
    Checksum,
    #[error("TRUNCATED: {0}")]
    Truncated(&'static str),
    #[error("INVALID: {0}")]
    Invalid(String),
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode(params: &PolicyParameters) -> Vec<u8> {
    let c = &params.config;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&FEATURE_SCHEMA_VERSION.to_le_bytes());
    put_u32(&mut out, c.d_h);
    put_u32(&mut out, c.n_layers);
    put_u32(&mut out, c.n_heads);
    out.extend_from_slice(&c.dropout.to_le_bytes());
    put_u32(&mut out, c.gate_depth);
    put_u32(&mut out, c.head_widths.len());
    for &w in &c.head_widths {
        put_u32(&mut out, w);
    }
    out.extend_from_slice(&c.seed.to_le_bytes());
    put_u32(&mut out, params.tensors.len());
    for t in &params.tensors {
        put_u32(&mut out, t.name.len());
        out.extend_from_slice(t.name.as_bytes());
        put_u32(&mut out, t.value.rows);
        put_u32(&mut out, t.value.cols);
        for v in &t.value.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sum = fnv1a64(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(CheckpointError::Truncated(what))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<usize, CheckpointError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self, what: &'static str) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }
}

pub fn decode(bytes: &[u8]) -> Result<PolicyParameters, CheckpointError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < MAGIC.len() + 8 {
        return Err(CheckpointError::Truncated("header"));
    }
    let (payload, tail) = bytes.split_at(bytes.len() - 8);
    if fnv1a64(payload) != u64::from_le_bytes(tail.try_into().expect("8 bytes")) {
        return Err(CheckpointError::Checksum);
    }
    let mut r = Reader {
        buf: payload,
        pos: MAGIC.len(),
    };
    let version = r.u32("format version")? as u32;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let schema = r.u32("schema version")? as u32;
    if schema != FEATURE_SCHEMA_VERSION {
        return Err(CheckpointError::SchemaMismatch {
            found: schema,
            expected: FEATURE_SCHEMA_VERSION,
        });
    }
    let d_h = r.u32("config")?;
    let n_layers = r.u32("config")?;
    let n_heads = r.u32("config")?;
    let dropout = r.f64("config")?;
    let gate_depth = r.u32("config")?;
    let nw = r.u32("config")?;
    let head_widths = (0..nw)
        .map(|_| r.u32("head widths"))
        .collect::<Result<Vec<_>, _>>()?;
    let seed = r.u64("config")?;
    let config = NetConfig {
        d_h,
        n_layers,
        n_heads,
        dropout,
        gate_depth,
        head_widths,
        seed,
    };
    let count = r.u32("tensor count")?;
    let mut tensors = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u32("tensor name")?;
        let name = std::str::from_utf8(r.take(len, "tensor name")?)
            .map_err(|_| CheckpointError::Invalid("tensor name is not UTF-8".into()))?
            .to_string();
        let rows = r.u32("tensor shape")?;
        let cols = r.u32("tensor shape")?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| CheckpointError::Invalid("tensor too large".into()))?;
        let raw = r.take(
            n.checked_mul(8)
                .ok_or(CheckpointError::Truncated("tensor data"))?,
            "tensor data",
        )?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push(NamedTensor {
            name,
            value: Mat::from_vec(rows, cols, data),
        });
    }
    if r.pos != payload.len() {
        return Err(CheckpointError::Invalid(
            "trailing bytes before checksum".into(),
        ));
    }
    let params = PolicyParameters { config, tensors };
    params
        .check_layout()
        .map_err(|e| CheckpointError::Invalid(e.to_string()))?;
    Ok(params)
}

pub fn save(params: &PolicyParameters, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, encode(params))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<PolicyParameters, CheckpointError> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> PolicyParameters {
        PolicyParameters::init(&NetConfig::with_gate_depth(8, 1, 2, 0.1, 2, 5)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let p = tiny();
        let q = decode(&encode(&p)).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn corruption_is_detected() {
        let mut b = encode(&tiny());
        let mid = b.len() / 2;
        b[mid] ^= 1;
        assert!(matches!(decode(&b), Err(CheckpointError::Checksum)));
        assert!(matches!(decode(b"nope"), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn schema_version_is_checked() {
        let mut b = encode(&tiny());
        b[12..16].copy_from_slice(&99u32.to_le_bytes());
        let n = b.len() - 8;
        let sum = fnv1a64(&b[..n]);
        b[n..].copy_from_slice(&sum.to_le_bytes());
        assert!(matches!(
            decode(&b),
            Err(CheckpointError::SchemaMismatch { found: 99, .. })
        ));
    }
}

//! Binary parameter container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "NFCK" | version: u8 | entries: u32
//! per entry: name_len: u32 | name: utf8 | ndim: u32 | dims: u64 * ndim | data: f64 * prod(dims)
//! ```

use std::path::Path;

use thiserror::Error;

use super::{ParamStore, Tensor};

pub const MAGIC: &[u8; 4] = b"NFCK";
pub const VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic bytes")]
    BadMagic,
    #[error("checkpoint version {found} is incompatible with this reader (expects {expected})")]
    Version { found: u8, expected: u8 },
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("checkpoint entry name is not valid UTF-8")]
    BadName,
    #[error("checkpoint has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("checkpoint entry {name:?}: {reason}")]
    BadEntry { name: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn encode_checkpoint(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, t) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated(what))?;
        if end > self.buf.len() {
            return Err(CheckpointError::Truncated(what));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

/// Decodes a whole checkpoint; any defect fails the call without returning partial state.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<ParamStore, CheckpointError> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4, "magic").map_err(|_| CheckpointError::BadMagic)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = cur.take(1, "version")?[0];
    if version != VERSION {
        return Err(CheckpointError::Version {
            found: version,
            expected: VERSION,
        });
    }
    let count = cur.u32("entry count")?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = cur.u32("name length")? as usize;
        let name = std::str::from_utf8(cur.take(name_len, "name")?)
            .map_err(|_| CheckpointError::BadName)?
            .to_string();
        let ndim = cur.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(ndim.min(8));
        for _ in 0..ndim {
            shape.push(cur.u64("shape")? as usize);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| CheckpointError::BadEntry {
                name: name.clone(),
                reason: "shape overflows".into(),
            })?;
        let raw = cur.take(numel.checked_mul(8).ok_or(CheckpointError::Truncated("data"))?, "data")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| CheckpointError::BadEntry {
            name: name.clone(),
            reason: e.to_string(),
        })?;
        store.insert(name, t);
    }
    if cur.pos != bytes.len() {
        return Err(CheckpointError::TrailingBytes(bytes.len() - cur.pos));
    }
    Ok(store)
}

pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, encode_checkpoint(store))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore, CheckpointError> {
    decode_checkpoint(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("enc.0.weight", Tensor::matrix(2, 2, vec![1.5, -0.0, f64::MIN_POSITIVE, 3.0]).unwrap());
        s.insert("enc.0.bias", Tensor::zeros(1, 2));
        s
    }

    #[test]
    fn round_trip() {
        let s = sample();
        let bytes = encode_checkpoint(&s);
        assert_eq!(&bytes[..4], b"NFCK");
        assert_eq!(bytes[4], VERSION);
        let back = decode_checkpoint(&bytes).unwrap();
        for ((n1, t1), (n2, t2)) in s.iter().zip(back.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            let b1: Vec<u64> = t1.data().iter().map(|v| v.to_bits()).collect();
            let b2: Vec<u64> = t2.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(b1, b2);
        }
    }

    #[test]
    fn truncated_and_versioned_inputs_fail() {
        let bytes = encode_checkpoint(&sample());
        for cut in [0, 3, 5, 9, bytes.len() - 1] {
            assert!(decode_checkpoint(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut bumped = bytes.clone();
        bumped[4] = VERSION + 1;
        assert!(matches!(
            decode_checkpoint(&bumped),
            Err(CheckpointError::Version { found, .. }) if found == VERSION + 1
        ));
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad), Err(CheckpointError::BadMagic)));
    }
}

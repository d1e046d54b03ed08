//! Binary checkpoint format.
//!
//! `RFNN`, a version byte, a little-endian `u32` layer count, one
//! `(u32 out, u32 in)` pair per layer, then each layer's weights followed by
//! its biases as little-endian `f64`.

use std::fs;
use std::path::Path;

use super::{Dense, EncoderParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RFNN";
const VERSION: u8 = 1;

pub fn encode(params: &EncoderParams) -> Vec<u8> {
    let layers = params.layers();
    let mut buf = Vec::with_capacity(16 + 8 * params.num_scalars());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.push(VERSION);
    buf.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for l in layers {
        buf.extend_from_slice(&(l.out_dim as u32).to_le_bytes());
        buf.extend_from_slice(&(l.in_dim as u32).to_le_bytes());
    }
    for t in params.tensors() {
        for v in t {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<EncoderParams> {
    let bad = |msg: &str| Error::Checkpoint {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    let mut cur = bytes;
    let mut take = |n: usize| -> Result<&[u8]> {
        if cur.len() < n {
            return Err(bad("truncated file"));
        }
        let (head, tail) = cur.split_at(n);
        cur = tail;
        Ok(head)
    };
    if take(4)? != CHECKPOINT_MAGIC {
        return Err(bad("missing RFNN magic"));
    }
    if take(1)?[0] != VERSION {
        return Err(bad("unsupported version"));
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap()) as usize;
    let count = u32_at(take(4)?);
    if count > 64 {
        return Err(bad("implausible layer count"));
    }
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let out_dim = u32_at(take(4)?);
        let in_dim = u32_at(take(4)?);
        shapes.push((out_dim, in_dim));
    }
    let mut layers = Vec::with_capacity(count);
    for (out_dim, in_dim) in shapes {
        let mut read = |n: usize| -> Result<Vec<f64>> {
            let raw = take(n.checked_mul(8).ok_or_else(|| bad("layer too large"))?)?;
            Ok(raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let weight = read(out_dim * in_dim)?;
        let bias = read(out_dim)?;
        layers.push(Dense {
            out_dim,
            in_dim,
            weight,
            bias,
        });
    }
    if !cur.is_empty() {
        return Err(bad("trailing bytes"));
    }
    EncoderParams::from_layers(layers).map_err(|e| bad(&e.to_string()))
}

pub fn save_checkpoint(path: &Path, params: &EncoderParams) -> Result<()> {
    fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<EncoderParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let p = EncoderParams::init(8, 3).unwrap();
        let bytes = encode(&p);
        assert_eq!(&bytes[..5], b"RFNN\x01");
        assert_eq!(bytes.len(), 4 + 1 + 4 + 5 * 8 + 8 * p.num_scalars());
        assert_eq!(decode(&bytes, Path::new("x")).unwrap(), p);
    }

    #[test]
    fn corrupt_files_rejected() {
        let p = EncoderParams::init(3, 1).unwrap();
        let bytes = encode(&p);
        let path = Path::new("m.rfnn");
        assert!(decode(&bytes[..bytes.len() - 1], path).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra, path).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(
            decode(&wrong, path),
            Err(Error::Checkpoint { .. })
        ));
        // A 3->65 first layer does not match the architecture.
        let mut shape = bytes;
        shape[9..13].copy_from_slice(&65u32.to_le_bytes());
        assert!(decode(&shape, path).is_err());
    }
}

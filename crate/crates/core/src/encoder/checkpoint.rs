//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! magic        4 bytes  "SCCK"
//! version      u32      CHECKPOINT_VERSION
//! vocab_size   u32
//! layers       u32
//! width        u32
//! heads        u32
//! ff_width     u32
//! max_len      u32
//! dropout      f64
//! vocab_hash   u64      Vocab::fingerprint of the training vocabulary
//! arrays       u32      number of parameter arrays
//! then, per array in declaration order:
//!   ndim       u32
//!   dims       ndim x u32
//!   values     product(dims) x f32
//! ```
//!
//! Equal parameter values always serialize to equal bytes.

use std::fs;
use std::path::Path;

use super::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::numeric::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SCCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointHeader {
    pub version: u32,
    pub config: EncoderConfig,
    pub vocab_hash: u64,
}

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn to_bytes(params: &EncoderParams<f32>, vocab_hash: u64) -> Result<Vec<u8>> {
    let c = &params.config;
    let mut buf = Vec::with_capacity(64 + 4 * params.num_scalars());
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [c.vocab_size, c.layers, c.width, c.heads, c.ff_width, c.max_len] {
        put_u32(&mut buf, v)?;
    }
    buf.extend_from_slice(&c.dropout.to_le_bytes());
    buf.extend_from_slice(&vocab_hash.to_le_bytes());
    put_u32(&mut buf, params.tensors.len())?;
    for t in &params.tensors {
        put_u32(&mut buf, t.shape().len())?;
        for &d in t.shape() {
            put_u32(&mut buf, d)?;
        }
        for &x in t.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<(CheckpointHeader, EncoderParams<f32>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let config = EncoderConfig {
        vocab_size: r.u32()?,
        layers: r.u32()?,
        width: r.u32()?,
        heads: r.u32()?,
        ff_width: r.u32()?,
        max_len: r.u32()?,
        dropout: r.f64()?,
    };
    config.validate()?;
    let vocab_hash = r.u64()?;
    let count = r.u32()?;
    let layout = config.layout();
    if count != layout.len() {
        return Err(Error::Checkpoint(format!(
            "{count} arrays stored, config implies {}",
            layout.len()
        )));
    }
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let ndim = r.u32()?;
        let shape = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("array too large".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor::new(shape, data));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let params = EncoderParams::from_tensors(config, tensors)?;
    Ok((
        CheckpointHeader {
            version,
            config,
            vocab_hash,
        },
        params,
    ))
}

pub fn write_checkpoint(path: &Path, params: &EncoderParams<f32>, vocab_hash: u64) -> Result<()> {
    let bytes = to_bytes(params, vocab_hash)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, EncoderParams<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;

    fn params() -> EncoderParams<f32> {
        let cfg = EncoderConfig {
            width: 8,
            heads: 2,
            ff_width: 16,
            max_len: 6,
            layers: 1,
            ..EncoderConfig::new(12)
        };
        EncoderParams::init(cfg, &mut Rng::new(4)).unwrap()
    }

    #[test]
    fn round_trip_preserves_bytes_and_values() {
        let p = params();
        let bytes = to_bytes(&p, 0xDEAD_BEEF).unwrap();
        let (h, back) = from_bytes(&bytes).unwrap();
        assert_eq!(h.vocab_hash, 0xDEAD_BEEF);
        assert_eq!(h.version, CHECKPOINT_VERSION);
        assert_eq!(back, p);
        assert_eq!(to_bytes(&back, 0xDEAD_BEEF).unwrap(), bytes);
    }

    #[test]
    fn header_layout() {
        let bytes = to_bytes(&params(), 7).unwrap();
        assert_eq!(&bytes[..4], b"SCCK");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 12);
        assert_eq!(u64::from_le_bytes(bytes[40..48].try_into().unwrap()), 7);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = to_bytes(&params(), 1).unwrap();
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(from_bytes(&magic).is_err());
        let mut version = bytes;
        version[4] = 9;
        assert!(from_bytes(&version).is_err());
    }
}

//! Binary model checkpoint.
//!
//! ```text
//! b"FSCK", u32 version = 1, u32 layer count L
//! u32 layer_dims[L], u64 P
//! f64 params[P] (little-endian)
//! packed mask, ceil(P / 8) bytes, LSB-first
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{Architecture, ParamVector};
use crate::sparsity::BinaryMask;

const MAGIC: &[u8; 4] = b"FSCK";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub arch: Architecture,
    pub params: ParamVector,
    pub mask: BinaryMask,
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let dims = ck.arch.layer_dims();
    let mut out = Vec::with_capacity(24 + dims.len() * 4 + ck.params.len() * 9);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&(ck.params.len() as u64).to_le_bytes());
    for p in ck.params.iter() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out.extend_from_slice(&ck.mask.pack());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.at..self.at + n)
            .ok_or_else(|| Error::format(field, "checkpoint truncated"))?;
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut c = Cursor { bytes, at: 0 };
    if c.take(4, "checkpoint.magic")? != MAGIC {
        return Err(Error::format("checkpoint.magic", "not a checkpoint file"));
    }
    let version = c.u32("checkpoint.version")?;
    if version != VERSION {
        return Err(Error::format(
            "checkpoint.version",
            format!("unsupported version {version}"),
        ));
    }
    let layers = c.u32("checkpoint.layers")? as usize;
    let dims = (0..layers)
        .map(|_| c.u32("checkpoint.layer_dims").map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let arch = Architecture::new(dims)
        .map_err(|e| Error::format("checkpoint.layer_dims", e.to_string()))?;
    let p = u64::from_le_bytes(c.take(8, "checkpoint.param_count")?.try_into().unwrap()) as usize;
    if p != arch.param_count() {
        return Err(Error::format(
            "checkpoint.param_count",
            format!("{p} parameters for an architecture of {}", arch.param_count()),
        ));
    }
    let params: Vec<f64> = c
        .take(p * 8, "checkpoint.params")?
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let mask = BinaryMask::unpack(c.take(p.div_ceil(8), "checkpoint.mask")?, p)?;
    if c.at != bytes.len() {
        return Err(Error::format("checkpoint.mask", "trailing bytes after the mask"));
    }
    Ok(Checkpoint {
        arch,
        params: params.into(),
        mask,
    })
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(ck)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

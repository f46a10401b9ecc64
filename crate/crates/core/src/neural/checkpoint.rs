//! Binary parameter blobs.
//!
//! Layout, all integers little-endian:
//! magic (8 bytes) | format u32 | input width u32 | layer count u32 |
//! per layer: width u32, activation u8, batch norm u8, l2 f64 |
//! version u64 | params len u64 | params f64.. | stats len u64 | stats f64..

use alloc::format;
use alloc::vec::Vec;

use super::{Activation, LayerSpec, ParameterSet};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"TSCNET\0\0";
const FORMAT: u32 = 1;

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Elu => 0,
        Activation::Tanh => 1,
        Activation::Linear => 2,
    }
}

pub fn encode_parameters(ps: &ParameterSet, out: &mut Vec<u8>) {
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&FORMAT.to_le_bytes());
    out.extend_from_slice(&(ps.input_width() as u32).to_le_bytes());
    out.extend_from_slice(&(ps.specs().len() as u32).to_le_bytes());
    for s in ps.specs() {
        out.extend_from_slice(&(s.width as u32).to_le_bytes());
        out.push(activation_code(s.activation));
        out.push(s.batch_norm as u8);
        out.extend_from_slice(&s.l2.to_le_bytes());
    }
    out.extend_from_slice(&ps.version().to_le_bytes());
    for v in [&ps.params, &ps.stats] {
        out.extend_from_slice(&(v.len() as u64).to_le_bytes());
        for x in v.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64_vec(&mut self, expected: usize, what: &str) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        if n != expected {
            return Err(Error::Checkpoint(format!("{what}: {n} values, architecture needs {expected}")));
        }
        (0..n).map(|_| self.f64()).collect()
    }
}

/// Decodes one parameter set starting at `*pos`, advancing it past the blob.
pub fn decode_parameters(buf: &[u8], pos: &mut usize) -> Result<ParameterSet> {
    let mut r = Reader { buf, pos: *pos };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let format = r.u32()?;
    if format != FORMAT {
        return Err(Error::Checkpoint(format!("unsupported format {format}")));
    }
    let input_width = r.u32()? as usize;
    let layers = r.u32()? as usize;
    if layers > 1024 {
        return Err(Error::Checkpoint(format!("implausible layer count {layers}")));
    }
    let mut specs = Vec::with_capacity(layers);
    for _ in 0..layers {
        let width = r.u32()? as usize;
        let activation = match r.u8()? {
            0 => Activation::Elu,
            1 => Activation::Tanh,
            2 => Activation::Linear,
            c => return Err(Error::Checkpoint(format!("unknown activation code {c}"))),
        };
        let batch_norm = match r.u8()? {
            0 => false,
            1 => true,
            c => return Err(Error::Checkpoint(format!("bad batch-norm flag {c}"))),
        };
        let l2 = r.f64()?;
        specs.push(LayerSpec { width, activation, batch_norm, l2 });
    }
    let version = r.u64()?;
    let mut ps = ParameterSet::zeros(input_width, &specs).map_err(|e| Error::Checkpoint(format!("{e}")))?;
    ps.params = r.f64_vec(ps.params.len(), "params")?;
    ps.stats = r.f64_vec(ps.stats.len(), "stats")?;
    ps.set_version(version);
    *pos = r.pos;
    Ok(ps)
}

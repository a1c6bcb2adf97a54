//! `S3CK` checkpoint container.
//!
//! Layout (little-endian): magic `S3CK`, `u32` version, `u32`-prefixed UTF-8
//! metadata (configuration echo), `u32` epoch, `f64` verification loss,
//! `u32` tensor count, then per tensor `u8` kind (0 parameter, 1 buffer),
//! `u16`-prefixed name, `u8` dtype (0 = f64), `u8` rank, `u32` dims and the
//! payload. A trailing `u8` flag announces optimizer state: `u64` step
//! followed by the first and second moments of every parameter in table
//! order.

use std::path::Path;

use super::optim::{Moments, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"S3CK";
const VERSION: u32 = 1;
const DTYPE_F64: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: String,
    pub epoch: u32,
    pub verification_loss: f64,
    pub store: ParamStore,
    pub with_optimizer: bool,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        out.extend_from_slice(self.meta.as_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.verification_loss.to_le_bytes());
        let n = self.store.params.len() + self.store.buffers.len();
        out.extend_from_slice(&(n as u32).to_le_bytes());
        let tables = [(0u8, &self.store.params), (1u8, &self.store.buffers)];
        for (kind, table) in tables {
            for (name, t) in table {
                out.push(kind);
                out.extend_from_slice(&(name.len() as u16).to_le_bytes());
                out.extend_from_slice(name.as_bytes());
                out.push(DTYPE_F64);
                out.push(t.shape().len() as u8);
                for &d in t.shape() {
                    out.extend_from_slice(&(d as u32).to_le_bytes());
                }
                put_f64s(&mut out, t.data());
            }
        }
        if self.with_optimizer {
            out.push(1);
            out.extend_from_slice(&self.store.step.to_le_bytes());
            for name in self.store.params.keys() {
                let m = &self.store.moments[name];
                put_f64s(&mut out, m.m.data());
                put_f64s(&mut out, m.v.data());
            }
        } else {
            out.push(0);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(r.err(0, "bad magic, expected S3CK"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.err(4, format!("unsupported version {version}")));
        }
        let meta_len = r.u32()? as usize;
        let meta_off = r.pos;
        let meta = String::from_utf8(r.take(meta_len)?.to_vec())
            .map_err(|_| r.err(meta_off as u64, "metadata is not UTF-8"))?;
        let epoch = r.u32()?;
        let verification_loss = r.f64()?;
        let n = r.u32()? as usize;
        let mut store = ParamStore::new();
        for _ in 0..n {
            let off = r.pos;
            let kind = r.u8()?;
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| r.err(off as u64, "tensor name is not UTF-8"))?;
            if r.u8()? != DTYPE_F64 {
                return Err(r.err(off as u64, format!("unsupported dtype for {name}")));
            }
            let rank = r.u8()? as usize;
            let dims: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
            let len: usize = dims.iter().product();
            let data = r.f64s(len)?;
            let t = Tensor::new(dims, data).map_err(|e| r.err(off as u64, e.to_string()))?;
            match kind {
                0 => store.insert(name, t),
                1 => store.insert_buffer(name, t),
                k => return Err(r.err(off as u64, format!("unknown tensor kind {k}"))),
            }
        }
        let with_optimizer = match r.u8()? {
            0 => false,
            1 => {
                store.step = r.u64()?;
                let names: Vec<String> = store.params.keys().cloned().collect();
                for name in names {
                    let shape = store.params[&name].shape().to_vec();
                    let len = store.params[&name].len();
                    let m = Tensor::new(shape.clone(), r.f64s(len)?)?;
                    let v = Tensor::new(shape, r.f64s(len)?)?;
                    store.moments.insert(name, Moments { m, v });
                }
                true
            }
            f => return Err(r.err((r.pos - 1) as u64, format!("bad optimizer flag {f}"))),
        };
        if r.pos != bytes.len() {
            return Err(r.err(r.pos as u64, "trailing bytes"));
        }
        Ok(Checkpoint {
            meta,
            epoch,
            verification_loss,
            store,
            with_optimizer,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn err(&self, offset: u64, message: impl Into<String>) -> Error {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(self.pos as u64, format!("unexpected end of checkpoint (need {n} bytes)")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| self.err(self.pos as u64, "size overflow"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

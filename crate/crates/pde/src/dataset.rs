//! Binary dataset container.
//!
//! Layout (little-endian): magic `ABLEDS01`; `u32` dims; `u32` per extent;
//! `u64` sample count; `u32` input channels; `u32` target channels; `u8`
//! dtype tag (`0` = f64); inputs then targets as row-major f64; `u64` length
//! and UTF-8 JSON metadata.

use std::fs;
use std::path::Path;

use able_core::tensor::numel;
use able_core::{Grid, Tensor};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{PdeError, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"ABLEDS01";

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub grid: Grid,
    /// `(S, C_in, spatial...)`.
    pub inputs: Tensor,
    /// `(S, C_out, spatial...)`.
    pub targets: Tensor,
    pub meta: Value,
}

fn bad(msg: impl Into<String>) -> PdeError {
    PdeError::Format(msg.into())
}

impl Dataset {
    pub fn new(grid: Grid, inputs: Tensor, targets: Tensor, meta: Value) -> Result<Self> {
        let d = Self {
            grid,
            inputs,
            targets,
            meta,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let spatial = self.grid.extents();
        for (name, t) in [("inputs", &self.inputs), ("targets", &self.targets)] {
            let s = t.shape();
            if s.len() != 2 + spatial.len() || &s[2..] != spatial {
                return Err(bad(format!("{name} shape {s:?} does not match grid {spatial:?}")));
            }
            if !t.all_finite() {
                return Err(bad(format!("{name} contain non-finite values")));
            }
            t.as_real()?;
        }
        if self.inputs.shape()[0] != self.targets.shape()[0] {
            return Err(bad(format!(
                "{} inputs but {} targets",
                self.inputs.shape()[0],
                self.targets.shape()[0]
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn in_channels(&self) -> usize {
        self.inputs.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.targets.shape()[1]
    }

    /// Samples `idx` in the given order.
    pub fn select(&self, idx: &[usize]) -> Result<Dataset> {
        let take = |t: &Tensor| -> Result<Tensor> {
            let per = numel(&t.shape()[1..]);
            let v = t.as_real()?;
            let mut out = Vec::with_capacity(per * idx.len());
            for &i in idx {
                if i >= self.len() {
                    return Err(PdeError::Domain(format!("sample {i} out of range {}", self.len())));
                }
                out.extend_from_slice(&v[i * per..(i + 1) * per]);
            }
            let mut shape = t.shape().to_vec();
            shape[0] = idx.len();
            Ok(Tensor::real(&shape, out)?)
        };
        Ok(Dataset {
            grid: self.grid.clone(),
            inputs: take(&self.inputs)?,
            targets: take(&self.targets)?,
            meta: self.meta.clone(),
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut buf = Vec::new();
        buf.extend_from_slice(DATASET_MAGIC);
        buf.extend_from_slice(&(self.grid.dims() as u32).to_le_bytes());
        for &n in self.grid.extents() {
            buf.extend_from_slice(&(n as u32).to_le_bytes());
        }
        buf.extend_from_slice(&(self.len() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.in_channels() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.out_channels() as u32).to_le_bytes());
        buf.push(0);
        for t in [&self.inputs, &self.targets] {
            for v in t.as_real()? {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let meta = serde_json::to_vec(&self.meta).map_err(|e| bad(e.to_string()))?;
        buf.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        buf.extend_from_slice(&meta);
        Ok(buf)
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut c = Reader { data, pos: 0 };
        let magic = c.take(8).map_err(|_| bad("file too short for magic"))?;
        if magic != DATASET_MAGIC {
            if &magic[..6] == b"ABLEDS" {
                return Err(bad(format!(
                    "unsupported version {}",
                    String::from_utf8_lossy(&magic[6..])
                )));
            }
            return Err(bad("not a dataset (bad magic)"));
        }
        let dims = c.u32()? as usize;
        if !(1..=2).contains(&dims) {
            return Err(bad(format!("corrupt header: {dims} spatial dims")));
        }
        let extents = (0..dims).map(|_| c.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let grid = Grid::new(&extents).map_err(|e| bad(format!("corrupt header: {e}")))?;
        let s = c.u64()? as usize;
        let cin = c.u32()? as usize;
        let cout = c.u32()? as usize;
        let tag = c.u8()?;
        if tag != 0 {
            return Err(bad(format!("unknown dtype tag {tag}")));
        }
        let points = grid.points();
        let mut read = |ch: usize| -> Result<Tensor> {
            let len = s
                .checked_mul(ch)
                .and_then(|v| v.checked_mul(points))
                .ok_or_else(|| bad("corrupt header: size overflow"))?;
            let bytes = c.take(len.checked_mul(8).ok_or_else(|| bad("corrupt header: size overflow"))?)?;
            let values = bytes
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            let mut shape = vec![s, ch];
            shape.extend(&extents);
            Ok(Tensor::real(&shape, values)?)
        };
        let inputs = read(cin)?;
        let targets = read(cout)?;
        let mlen = c.u64()? as usize;
        let meta: Value = serde_json::from_slice(c.take(mlen)?).map_err(|e| bad(format!("metadata: {e}")))?;
        if c.pos != data.len() {
            return Err(bad("trailing bytes after metadata"));
        }
        Dataset::new(grid, inputs, targets, meta)
    }

    /// Hex SHA-256 of the serialised form.
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_bytes()?)))
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(bad(format!(
                "truncated: need {n} bytes at offset {}, have {}",
                self.pos,
                self.data.len() - self.pos
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn dataset_write(d: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, d.to_bytes()?)?;
    Ok(())
}

pub fn dataset_read(path: &Path) -> Result<Dataset> {
    Dataset::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(s: usize) -> Dataset {
        let grid = Grid::d1(8).unwrap();
        Dataset::new(
            grid,
            Tensor::from_fn(&[s, 2, 8], |i| i as f64 * 0.5),
            Tensor::from_fn(&[s, 1, 8], |i| -(i as f64)),
            serde_json::json!({"kind": "toy"}),
        )
        .unwrap()
    }

    #[test]
    fn bytes_roundtrip() {
        for s in [0, 1, 3] {
            let d = toy(s);
            assert_eq!(Dataset::from_bytes(&d.to_bytes().unwrap()).unwrap(), d);
        }
    }

    #[test]
    fn mismatched_counts_rejected() {
        let grid = Grid::d1(8).unwrap();
        let r = Dataset::new(
            grid,
            Tensor::zeros(&[2, 1, 8], able_core::Dtype::Real),
            Tensor::zeros(&[3, 1, 8], able_core::Dtype::Real),
            Value::Null,
        );
        assert!(matches!(r, Err(PdeError::Format(_))));
    }

    #[test]
    fn select_reorders() {
        let d = toy(3).select(&[2, 0]).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.inputs.as_real().unwrap()[0], 16.0);
    }
}

//! Binary model container.
//!
//! Layout (little-endian): magic `ABLECK01`, `u32` header length, UTF-8 JSON
//! header, `u32` tensor count, then per tensor: `u16` name length, name bytes,
//! dtype tag (`0` real, `1` complex), `u8` rank, `u64` extents, values
//! (complex entries as interleaved re, im).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::operator::{AbleNetwork, NetworkConfig};
use crate::params::ParamStore;
use crate::tensor::{numel, Dtype, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ABLECK01";

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn write_checkpoint(out: &mut impl Write, header: &Value, store: &ParamStore) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    let h = serde_json::to_vec(header).map_err(|e| bad(e.to_string()))?;
    buf.extend_from_slice(&(h.len() as u32).to_le_bytes());
    buf.extend_from_slice(&h);
    buf.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for p in store.params() {
        let name = p.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name);
        buf.push(match p.value.dtype() {
            Dtype::Real => 0,
            Dtype::Complex => 1,
        });
        buf.push(p.value.ndim() as u8);
        for &d in p.value.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match p.value.dtype() {
            Dtype::Real => {
                for v in p.value.as_real()? {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
            Dtype::Complex => {
                for z in p.value.as_complex()? {
                    buf.extend_from_slice(&z.re.to_le_bytes());
                    buf.extend_from_slice(&z.im.to_le_bytes());
                }
            }
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(bad(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.data[self.pos..self.pos + n];
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
}

pub fn read_checkpoint(input: &mut impl Read) -> Result<(Value, Vec<(String, Tensor)>)> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    let mut c = Cursor { data: &data, pos: 0 };
    let magic = c.take(8).map_err(|_| bad("file too short for magic"))?;
    if magic != CHECKPOINT_MAGIC {
        if &magic[..6] == b"ABLECK" {
            return Err(bad(format!(
                "unsupported version {}",
                String::from_utf8_lossy(&magic[6..])
            )));
        }
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let hlen = c.u32()? as usize;
    let header: Value = serde_json::from_slice(c.take(hlen)?).map_err(|e| bad(format!("header: {e}")))?;
    let count = c.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let nlen = c.u16()? as usize;
        let name = String::from_utf8(c.take(nlen)?.to_vec()).map_err(|_| bad("tensor name is not UTF-8"))?;
        let tag = c.u8()?;
        let ndim = c.u8()? as usize;
        let shape = (0..ndim).map(|_| c.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len = numel(&shape);
        let t = match tag {
            0 => Tensor::real(&shape, (0..len).map(|_| c.f64()).collect::<Result<_>>()?)?,
            1 => Tensor::complex(
                &shape,
                (0..len)
                    .map(|_| Ok(Complex64::new(c.f64()?, c.f64()?)))
                    .collect::<Result<_>>()?,
            )?,
            t => return Err(bad(format!("unknown dtype tag {t} for {name}"))),
        };
        tensors.push((name, t));
    }
    if c.pos != data.len() {
        return Err(bad("trailing bytes after last tensor"));
    }
    Ok((header, tensors))
}

/// Save a network; the architecture goes under `"network"` in the header and
/// `extra` entries are merged alongside.
pub fn save_network(path: &Path, net: &AbleNetwork, store: &ParamStore, extra: Value) -> Result<()> {
    let mut header = serde_json::Map::new();
    header.insert(
        "network".into(),
        serde_json::to_value(&net.config).map_err(|e| bad(e.to_string()))?,
    );
    if let Value::Object(m) = extra {
        header.extend(m);
    }
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &Value::Object(header), store)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Rebuild a network from its header and load the stored values.
pub fn load_network(path: &Path) -> Result<(AbleNetwork, ParamStore, Value)> {
    let mut file = fs::File::open(path)?;
    let (header, tensors) = read_checkpoint(&mut file)?;
    let cfg: NetworkConfig = serde_json::from_value(header.get("network").cloned().ok_or_else(|| bad("header lacks network"))?)
        .map_err(|e| bad(format!("network config: {e}")))?;
    let mut store = ParamStore::new();
    let net = AbleNetwork::new(&mut store, cfg, &mut ChaCha8Rng::seed_from_u64(0))?;
    store.load_values(tensors).map_err(|e| bad(e.to_string()))?;
    Ok((net, store, header))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (AbleNetwork, ParamStore) {
        let mut store = ParamStore::new();
        let cfg = NetworkConfig {
            width: 4,
            layers: 2,
            modes: 4,
            projection_width: 8,
            ..NetworkConfig::default()
        };
        let net = AbleNetwork::new(&mut store, cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        (net, store)
    }

    #[test]
    fn roundtrip_is_lossless() {
        let (net, store) = small();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_network(&path, &net, &store, serde_json::json!({"epoch": 3})).unwrap();
        let (net2, store2, header) = load_network(&path).unwrap();
        assert_eq!(net2, net);
        assert_eq!(store2, store);
        assert_eq!(header["epoch"], 3);
    }

    #[test]
    fn corrupt_files_are_refused() {
        let (net, store) = small();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &serde_json::json!({}), &store).unwrap();
        let _ = net;
        let mut wrong = buf.clone();
        wrong[0] = b'X';
        assert!(matches!(read_checkpoint(&mut wrong.as_slice()), Err(Error::Checkpoint(_))));
        let mut version = buf.clone();
        version[7] = b'9';
        let err = read_checkpoint(&mut version.as_slice()).unwrap_err();
        assert!(err.to_string().contains("version"));
        let truncated = &buf[..buf.len() - 5];
        assert!(matches!(read_checkpoint(&mut &truncated[..]), Err(Error::Checkpoint(_))));
    }
}

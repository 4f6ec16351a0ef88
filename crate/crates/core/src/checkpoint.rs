//! Binary checkpoint format.
//!
//! ```text
//! b"DAPNET01"
//! u32 length, UTF-8 metadata: sorted "key=value" lines
//! u32 tensor count
//! per tensor: u32 name length, name, u32 ndim, u64 dims, f32 values
//! ```
//!
//! All integers and floats are little-endian. The network shape is
//! rebuilt from the metadata, so a checkpoint is self-describing.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::backbone::BackboneConfig;
use crate::error::{DapError, Result};
use crate::layers::Lrn;
use crate::model::{Fusion, ModelParams, NetConfig};
use crate::real::Real;

pub const MAGIC: &[u8; 8] = b"DAPNET01";

/// Model parameters plus free-form string metadata (variant, seed, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub model: ModelParams<T>,
    pub extra: BTreeMap<String, String>,
}

fn net_metadata(c: &NetConfig, branches: usize) -> BTreeMap<String, String> {
    let b = &c.backbone;
    let fusion = match c.fusion {
        Fusion::Dense => "dense",
        Fusion::ConcatConv3 => "concat_conv3",
    };
    [
        ("net.input_size", b.input_size.to_string()),
        ("net.c1", b.c1.to_string()),
        ("net.c2", b.c2.to_string()),
        ("net.c3", b.c3.to_string()),
        ("net.lrn_size", b.lrn.size.to_string()),
        ("net.lrn_alpha", b.lrn.alpha.to_string()),
        ("net.lrn_beta", b.lrn.beta.to_string()),
        ("net.lrn_k", b.lrn.k.to_string()),
        ("net.c_agg", c.c_agg.to_string()),
        ("net.d4", c.d4.to_string()),
        ("net.d5", c.d5.to_string()),
        ("net.fusion", fusion.to_string()),
        ("net.fc_relu", c.fc_relu.to_string()),
        ("net.branches", branches.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn field<V: std::str::FromStr>(meta: &BTreeMap<String, String>, key: &str, path: &Path) -> Result<V> {
    let raw = meta
        .get(key)
        .ok_or_else(|| DapError::parse(path, 0, format!("checkpoint metadata lacks {key}")))?;
    raw.parse()
        .map_err(|_| DapError::parse(path, 0, format!("bad checkpoint metadata {key}={raw}")))
}

fn net_from_metadata(meta: &BTreeMap<String, String>, path: &Path) -> Result<(NetConfig, usize)> {
    let fusion = match meta.get("net.fusion").map(String::as_str) {
        Some("dense") => Fusion::Dense,
        Some("concat_conv3") => Fusion::ConcatConv3,
        other => return Err(DapError::parse(path, 0, format!("unknown fusion {other:?}"))),
    };
    let config = NetConfig {
        backbone: BackboneConfig {
            input_size: field(meta, "net.input_size", path)?,
            c1: field(meta, "net.c1", path)?,
            c2: field(meta, "net.c2", path)?,
            c3: field(meta, "net.c3", path)?,
            lrn: Lrn {
                size: field(meta, "net.lrn_size", path)?,
                alpha: field(meta, "net.lrn_alpha", path)?,
                beta: field(meta, "net.lrn_beta", path)?,
                k: field(meta, "net.lrn_k", path)?,
            },
        },
        c_agg: field(meta, "net.c_agg", path)?,
        d4: field(meta, "net.d4", path)?,
        d5: field(meta, "net.d5", path)?,
        fusion,
        fc_relu: field(meta, "net.fc_relu", path)?,
    };
    Ok((config, field(meta, "net.branches", path)?))
}

impl<T: Real> Checkpoint<T> {
    pub fn new(model: ModelParams<T>) -> Self {
        Checkpoint {
            model,
            extra: BTreeMap::new(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut meta = net_metadata(&self.model.config, self.model.head.branches());
        for (k, v) in &self.extra {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(DapError::Config(format!("metadata entry {k:?} cannot be stored")));
            }
            meta.entry(k.clone()).or_insert_with(|| v.clone());
        }
        let text: String = meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        let tensors = self.model.tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for t in tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.value.ndim() as u32).to_le_bytes());
            for &d in t.value.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.value.iter() {
                out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = bytes;
        let truncated = || DapError::parse(path, 0, "truncated checkpoint");
        let mut take = |n: usize| -> Result<&[u8]> {
            if r.len() < n {
                return Err(truncated());
            }
            let (head, tail) = r.split_at(n);
            r = tail;
            Ok(head)
        };
        if take(8)? != MAGIC {
            return Err(DapError::parse(path, 0, "not a DAPNet checkpoint"));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize;
        let meta_len = u32_at(take(4)?);
        let text = std::str::from_utf8(take(meta_len)?).map_err(|_| DapError::parse(path, 0, "metadata is not UTF-8"))?;
        let mut meta = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| DapError::parse(path, i + 1, "metadata line without '='"))?;
            meta.insert(k.to_string(), v.to_string());
        }
        let (config, branches) = net_from_metadata(&meta, path)?;
        let mut model = ModelParams::zeros(&config, branches)?;
        let expected = model.tensors().len();
        let count = u32_at(take(4)?);
        if count != expected {
            return Err(DapError::CountMismatch {
                what: "checkpoint tensors/model tensors".into(),
                left: count,
                right: expected,
            });
        }
        for _ in 0..count {
            let name_len = u32_at(take(4)?);
            let name = std::str::from_utf8(take(name_len)?)
                .map_err(|_| DapError::parse(path, 0, "tensor name is not UTF-8"))?
                .to_string();
            let ndim = u32_at(take(4)?);
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize);
            }
            let n: usize = shape.iter().product();
            let values: Vec<f32> = take(n.checked_mul(4).ok_or_else(truncated)?)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            model.set_tensor(&name, &shape, &values)?;
        }
        if !r.is_empty() {
            return Err(DapError::parse(path, 0, "trailing bytes after the last tensor"));
        }
        let extra = meta.into_iter().filter(|(k, _)| !k.starts_with("net.")).collect();
        Ok(Checkpoint { model, extra })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = fs::File::create(path).map_err(|e| DapError::io(path, e))?;
        f.write_all(&bytes).map_err(|e| DapError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| DapError::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Init;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_exact_for_f32() {
        for fusion in [Fusion::Dense, Fusion::ConcatConv3] {
            let cfg = NetConfig { fusion, ..NetConfig::toy() };
            let m = ModelParams::<f32>::init(&cfg, 3, Init::He, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            let mut ck = Checkpoint::new(m);
            ck.extra.insert("variant".into(), "full".into());
            let bytes = ck.to_bytes().unwrap();
            let back = Checkpoint::<f32>::from_bytes(&bytes, Path::new("mem")).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.to_bytes().unwrap(), bytes);
        }
    }

    #[test]
    fn rejects_garbage() {
        let p = Path::new("mem");
        assert!(Checkpoint::<f32>::from_bytes(b"NOTADAPNET", p).is_err());
        let m = ModelParams::<f32>::init(&NetConfig::toy(), 1, Init::He, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let bytes = Checkpoint::new(m).to_bytes().unwrap();
        assert!(Checkpoint::<f32>::from_bytes(&bytes[..bytes.len() - 3], p).is_err());
    }
}

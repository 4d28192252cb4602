//! Versioned binary container for trained networks.
//!
//! All integers are little-endian.
//!
//! ```text
//! magic           8 bytes   "ATRSRCK\0"
//! version         u32       1
//! dtype           u8        4 = f32, 8 = f64
//! conditioning    u8        0 = univariate, 1 = bivariate
//! padding         u8        0 = zero, 1 = periodic
//! reserved        u8        0
//! channels        u32
//! features        u32
//! blocks          u32
//! embed_dim       u32
//! levels          u32       S
//! timesteps       u32       T
//! networks        u32       1 = shared, S + 1 = one network per scale
//! tensor_count    u32
//! tensor_count times:
//!   name_len      u16
//!   name          name_len bytes of UTF-8 ("net<k>." prefix when networks > 1)
//!   ndim          u8
//!   dims          ndim x u32
//!   data          prod(dims) values of dtype
//! ```

use std::fs;
use std::path::Path;

use super::{Conditioning, DenoiserConfig, DenoiserParams, Padding, ParamLayout};
use crate::error::{Error, Result};
use crate::scalar::{DType, Scalar};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ATRSRCK\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// One shared network, or one network per scale.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserBank<T> {
    pub networks: Vec<DenoiserParams<T>>,
}

impl<T: Scalar> DenoiserBank<T> {
    pub fn shared(params: DenoiserParams<T>) -> Self {
        DenoiserBank { networks: vec![params] }
    }

    pub fn config(&self) -> &DenoiserConfig {
        self.networks[0].config()
    }

    pub fn is_shared(&self) -> bool {
        self.networks.len() == 1
    }

    /// The network that serves scale `s`.
    pub fn network_for(&self, s: usize) -> &DenoiserParams<T> {
        if self.is_shared() {
            &self.networks[0]
        } else {
            &self.networks[s]
        }
    }

    pub fn cast<U: Scalar>(&self) -> DenoiserBank<U> {
        DenoiserBank { networks: self.networks.iter().map(|n| n.cast()).collect() }
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode_checkpoint<T: Scalar>(ck: &DenoiserBank<T>) -> Result<Vec<u8>> {
    let first = ck.networks.first().ok_or_else(|| Error::Checkpoint("no networks to save".into()))?;
    let cfg = *first.config();
    if ck.networks.iter().any(|n| *n.config() != cfg) {
        return Err(Error::Checkpoint("networks in one checkpoint must share a configuration".into()));
    }
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&[T::DTYPE.code(), cfg.conditioning.code(), cfg.padding.code(), 0]);
    for v in [cfg.channels, cfg.features, cfg.blocks, cfg.embed_dim, cfg.levels, cfg.timesteps] {
        put_u32(&mut out, v);
    }
    put_u32(&mut out, ck.networks.len());
    let per_net = first.layout().tensors.len();
    put_u32(&mut out, per_net * ck.networks.len());
    let multi = ck.networks.len() > 1;
    for (k, net) in ck.networks.iter().enumerate() {
        for spec in &net.layout().tensors {
            let name = if multi { format!("net{k}.{}", spec.name) } else { spec.name.clone() };
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(spec.shape.len() as u8);
            for &d in &spec.shape {
                put_u32(&mut out, d);
            }
            for &v in &net.values()[spec.range()] {
                v.write_le(&mut out);
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
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

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

/// Reads the element type without decoding the rest.
pub fn peek_dtype(bytes: &[u8]) -> Result<DType> {
    if bytes.len() < 13 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    DType::from_code(bytes[12]).ok_or_else(|| Error::Checkpoint(format!("unknown dtype code {}", bytes[12])))
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<DenoiserBank<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let dtype = DType::from_code(r.u8()?).ok_or_else(|| Error::Checkpoint("unknown dtype".into()))?;
    let conditioning =
        Conditioning::from_code(r.u8()?).ok_or_else(|| Error::Checkpoint("unknown conditioning".into()))?;
    let padding = Padding::from_code(r.u8()?).ok_or_else(|| Error::Checkpoint("unknown padding".into()))?;
    r.u8()?;
    let cfg = DenoiserConfig {
        channels: r.u32()?,
        features: r.u32()?,
        blocks: r.u32()?,
        embed_dim: r.u32()?,
        levels: r.u32()?,
        timesteps: r.u32()?,
        conditioning,
        padding,
    };
    cfg.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
    let networks = r.u32()?;
    let count = r.u32()?;
    let layout = ParamLayout::new(&cfg);
    if networks == 0 || count != networks * layout.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "{count} tensors for {networks} networks of {} tensors",
            layout.tensors.len()
        )));
    }
    let width = match dtype {
        DType::F32 => 4,
        DType::F64 => 8,
    };
    let mut nets = Vec::with_capacity(networks);
    for k in 0..networks {
        let mut values = Vec::with_capacity(layout.total);
        for spec in &layout.tensors {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            let expect = if networks > 1 { format!("net{k}.{}", spec.name) } else { spec.name.clone() };
            if name != expect {
                return Err(Error::Checkpoint(format!("expected tensor {expect}, found {name}")));
            }
            let ndim = r.u8()? as usize;
            let dims: Vec<usize> = (0..ndim).map(|_| r.u32()).collect::<Result<_>>()?;
            if dims != spec.shape {
                return Err(Error::Checkpoint(format!("tensor {name} has shape {dims:?}, expected {:?}", spec.shape)));
            }
            let raw = r.take(spec.len() * width)?;
            for chunk in raw.chunks_exact(width) {
                let v = match dtype {
                    DType::F32 => T::c(f32::read_le(chunk) as f64),
                    DType::F64 => T::c(f64::read_le(chunk)),
                };
                values.push(v);
            }
        }
        nets.push(DenoiserParams::from_values(cfg, values)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(DenoiserBank { networks: nets })
}

pub fn write_checkpoint<T: Scalar>(ck: &DenoiserBank<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(ck)?;
    fs::write(path, bytes).map_err(|source| Error::Io { path: path.to_owned(), source })
}

/// Loads a checkpoint, converting stored values to `T` when the precisions differ.
pub fn read_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<DenoiserBank<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    decode_checkpoint(&bytes)
}

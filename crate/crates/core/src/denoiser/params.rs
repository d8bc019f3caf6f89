//! Named parameter tensors and their versioned binary container.
//!
//! Layout (little-endian): magic `PTYP`, version u16, then
//! `in_channels`, `base_width`, `time_dim` as u32, the optimizer step as u64,
//! the tensor count as u32, and per tensor its name (u16 length + UTF-8),
//! rank (u8), dims (u32 each) and values (f64 each).

use std::path::Path;

use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};

use super::unet::{TinyUNet, UNetConfig};

pub const PARAM_MAGIC: &[u8; 4] = b"PTYP";
pub const PARAM_VERSION: u16 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, t: Tensor<T>) -> usize {
        self.names.push(name.to_string());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| t.cast()).collect(),
        }
    }

    /// Zeroed store with the same names and shapes.
    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Tensor::zeros(&t.shape)).collect(),
        }
    }

    /// Errors with the first layer whose name or shape differs.
    pub fn check_compatible(&self, other: &ParamStore<T>) -> Result<()> {
        for (i, (name, t)) in self.names.iter().zip(&self.tensors).enumerate() {
            match (other.names.get(i), other.tensors.get(i)) {
                (Some(n), Some(o)) if n == name && o.shape == t.shape => {}
                (Some(_), Some(o)) => {
                    return Err(Error::LayerShape {
                        layer: name.clone(),
                        expected: t.shape.clone(),
                        found: o.shape.clone(),
                    })
                }
                _ => {
                    return Err(Error::LayerShape {
                        layer: name.clone(),
                        expected: t.shape.clone(),
                        found: Vec::new(),
                    })
                }
            }
        }
        if other.len() > self.len() {
            let extra = &other.names[self.len()];
            return Err(Error::LayerShape {
                layer: extra.clone(),
                expected: Vec::new(),
                found: other.tensors[self.len()].shape.clone(),
            });
        }
        Ok(())
    }
}

/// A decoded parameter container.
#[derive(Clone, Debug)]
pub struct ParamFile {
    pub config: UNetConfig,
    pub step: u64,
    pub store: ParamStore<f64>,
}

pub fn encode_params<T: Real>(config: &UNetConfig, step: u64, store: &ParamStore<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + store.count() * 8);
    out.extend_from_slice(PARAM_MAGIC);
    out.extend_from_slice(&PARAM_VERSION.to_le_bytes());
    for v in [config.in_channels, config.base_width, config.time_dim] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&step.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, t) in store.names().iter().zip(store.tensors()) {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape.len() as u8);
        for d in &t.shape {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.f64().to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format {
                offset: self.pos as u64,
                msg: format!("truncated {what}: need {n} bytes, {} remain", self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_params(bytes: &[u8]) -> Result<ParamFile> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != PARAM_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: "bad magic, expected PTYP".into(),
        });
    }
    let version = r.u16("version")?;
    if version != PARAM_VERSION {
        return Err(Error::Format {
            offset: 4,
            msg: format!("unsupported version {version}"),
        });
    }
    let config = UNetConfig {
        in_channels: r.u32("header")? as usize,
        base_width: r.u32("header")? as usize,
        time_dim: r.u32("header")? as usize,
    };
    let step = r.u64("header")?;
    let count = r.u32("header")? as usize;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = r.u16("tensor name")? as usize;
        let offset = r.pos;
        let name = std::str::from_utf8(r.take(len, "tensor name")?)
            .map_err(|_| Error::Format {
                offset: offset as u64,
                msg: "tensor name is not UTF-8".into(),
            })?
            .to_string();
        let rank = r.u8("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("tensor dims")? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * 8, &format!("values of `{name}`"))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        store.push(&name, Tensor::new(&shape, data));
    }
    if r.pos != bytes.len() {
        return Err(Error::Format {
            offset: r.pos as u64,
            msg: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }
    Ok(ParamFile { config, step, store })
}

pub fn save_params<T: Real>(net: &TinyUNet<T>, path: &Path) -> Result<()> {
    let bytes = encode_params(net.config(), 0, net.params());
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads a network whose hyperparameters come from the file.
pub fn load_params<T: Real>(path: &Path) -> Result<TinyUNet<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let file = decode_params(&bytes)?;
    let mut net = TinyUNet::<T>::new(file.config, 0)?;
    net.load_store(file.store.cast())?;
    Ok(net)
}

/// Loads parameters into an existing network, rejecting any layer whose
/// shape differs.
pub fn load_params_into<T: Real>(net: &mut TinyUNet<T>, path: &Path) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let file = decode_params(&bytes)?;
    net.load_store(file.store.cast())
}

//! Binary checkpoint container: named tensors and named scalars plus the
//! run configuration, all little-endian, validated strictly on load.
//! Entries live in sorted maps, so save → load → save reproduces the file
//! byte for byte.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::Tensor;
use ndarray::IxDyn;
use std::collections::BTreeMap;
use std::path::Path;

const MAGIC: &[u8; 8] = b"RFSTCKPT";
const VERSION: u32 = 1;

/// Everything a run needs to resume: step counter, config echo, optimizer
/// scalars and every parameter/state tensor by name.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<S: Scalar> {
    pub step: u64,
    /// The TOML the run was configured with, echoed verbatim.
    pub config: String,
    scalars: BTreeMap<String, f64>,
    tensors: BTreeMap<String, Tensor<S>>,
}

impl<S: Scalar> Checkpoint<S> {
    pub fn new(step: u64, config: impl Into<String>) -> Self {
        Checkpoint {
            step,
            config: config.into(),
            scalars: BTreeMap::new(),
            tensors: BTreeMap::new(),
        }
    }

    pub fn put_scalar(&mut self, name: impl Into<String>, value: f64) {
        self.scalars.insert(name.into(), value);
    }

    pub fn put_tensor(&mut self, name: impl Into<String>, value: Tensor<S>) {
        self.tensors.insert(name.into(), value);
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalars.get(name).copied()
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<S>> {
        self.tensors.get(name)
    }

    pub fn take_tensor(&mut self, name: &str) -> Option<Tensor<S>> {
        self.tensors.remove(name)
    }

    pub fn tensor_names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|s| s.as_str())
    }

    pub fn scalar_entries(&self) -> impl Iterator<Item = (&str, f64)> {
        self.scalars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.push(S::DTYPE_TAG);
        buf.extend_from_slice(&self.step.to_le_bytes());
        write_str(&mut buf, &self.config);
        buf.extend_from_slice(&(self.scalars.len() as u64).to_le_bytes());
        for (name, value) in &self.scalars {
            write_str(&mut buf, name);
            buf.extend_from_slice(&value.to_le_bytes());
        }
        buf.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for (name, tensor) in &self.tensors {
            write_str(&mut buf, name);
            buf.extend_from_slice(&(tensor.ndim() as u32).to_le_bytes());
            for &dim in tensor.shape() {
                buf.extend_from_slice(&(dim as u64).to_le_bytes());
            }
            for v in tensor.iter() {
                v.write_le(&mut buf).expect("writing to a Vec cannot fail");
            }
        }
        buf
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        let magic = r.take(MAGIC.len())?;
        if magic != MAGIC {
            return Err(Error::Checkpoint(
                "not a checkpoint file (magic bytes do not match)".into(),
            ));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (this build reads version {VERSION})"
            )));
        }
        let dtype = r.u8()?;
        if dtype != S::DTYPE_TAG {
            return Err(Error::Checkpoint(format!(
                "checkpoint stores dtype tag {dtype} but the runtime element type has tag {}",
                S::DTYPE_TAG
            )));
        }
        let step = r.u64()?;
        let config = r.string()?;
        let mut scalars = BTreeMap::new();
        let n_scalars = r.u64()? as usize;
        for _ in 0..n_scalars {
            let name = r.string()?;
            let value = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
            scalars.insert(name, value);
        }
        let mut tensors = BTreeMap::new();
        let n_tensors = r.u64()? as usize;
        for _ in 0..n_tensors {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            let mut count = 1usize;
            for _ in 0..ndim {
                let dim = r.u64()? as usize;
                count = count.checked_mul(dim).ok_or_else(|| {
                    Error::Checkpoint(format!("tensor {name:?} has an absurd shape"))
                })?;
                shape.push(dim);
            }
            let elem = std::mem::size_of::<S>();
            let mut bytes = r.take(count.checked_mul(elem).ok_or_else(|| {
                Error::Checkpoint(format!("tensor {name:?} has an absurd shape"))
            })?)?;
            let mut data = Vec::with_capacity(count);
            for _ in 0..count {
                data.push(S::read_le(&mut bytes).expect("length was checked above"));
            }
            let tensor = Tensor::from_shape_vec(IxDyn(&shape), data).map_err(|e| {
                Error::Checkpoint(format!("tensor {name:?} shape is inconsistent: {e}"))
            })?;
            tensors.insert(name, tensor);
        }
        if r.pos != buf.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after the last tensor",
                buf.len() - r.pos
            )));
        }
        Ok(Checkpoint { step, config, scalars, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

fn write_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u64).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Checkpoint(format!("unexpected end of file at byte {}", self.pos))
        })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
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

    fn string(&mut self) -> Result<String> {
        let len = self.u64()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::Checkpoint("name is not valid UTF-8".into()))
    }
}

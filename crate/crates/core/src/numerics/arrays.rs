//! Named-array container used by model checkpoints.
//!
//! Layout: an 8-byte little-endian header length, a UTF-8 JSON header, then
//! every array's values back to back as little-endian IEEE-754, row-major,
//! in manifest order. The header is
//! `{"meta": <any JSON>, "arrays": [{"name", "shape": [rows, cols], "dtype"}]}`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    F32,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::F32 => 4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub dtype: Dtype,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    arrays: Vec<ArrayEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArrayBundle {
    pub meta: serde_json::Value,
    pub arrays: Vec<(String, Tensor)>,
}

impl ArrayBundle {
    pub fn new(meta: serde_json::Value) -> Self {
        ArrayBundle {
            meta,
            arrays: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: &Tensor) {
        self.arrays.push((name.into(), tensor.clone()));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Removes and returns an array, failing if it is absent or misshapen.
    pub fn take(&mut self, name: &str, shape: (usize, usize)) -> Result<Tensor> {
        let idx = self
            .arrays
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::InvalidInput(format!("checkpoint lacks array `{name}`")))?;
        let (_, t) = self.arrays.remove(idx);
        t.ensure_shape("checkpoint array", shape)?;
        Ok(t)
    }

    pub fn write_to(&self, mut w: impl Write, dtype: Dtype) -> Result<()> {
        let header = Header {
            meta: self.meta.clone(),
            arrays: self
                .arrays
                .iter()
                .map(|(name, t)| ArrayEntry {
                    name: name.clone(),
                    shape: [t.rows(), t.cols()],
                    dtype,
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for (_, t) in &self.arrays {
            let mut buf = Vec::with_capacity(t.len() * dtype.width());
            for &v in t.data() {
                match dtype {
                    Dtype::F64 => buf.extend_from_slice(&v.to_le_bytes()),
                    Dtype::F32 => buf.extend_from_slice(&(v as f32).to_le_bytes()),
                }
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 30 {
            return Err(Error::InvalidInput(format!("implausible header length {len}")));
        }
        let mut header = vec![0u8; len];
        r.read_exact(&mut header)?;
        let header: Header = serde_json::from_slice(&header)?;
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for entry in header.arrays {
            let [rows, cols] = entry.shape;
            let width = entry.dtype.width();
            let mut raw = vec![0u8; rows * cols * width];
            r.read_exact(&mut raw)?;
            let data = raw
                .chunks_exact(width)
                .map(|b| match entry.dtype {
                    Dtype::F64 => f64::from_le_bytes(b.try_into().unwrap()),
                    Dtype::F32 => f32::from_le_bytes(b.try_into().unwrap()) as f64,
                })
                .collect();
            arrays.push((entry.name, Tensor::from_vec(rows, cols, data)?));
        }
        Ok(ArrayBundle {
            meta: header.meta,
            arrays,
        })
    }

    pub fn save(&self, path: &std::path::Path, dtype: Dtype) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file), dtype)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file)).map_err(|e| match e {
            Error::Stream(io) => Error::format(path, io.to_string()),
            Error::Json(j) => Error::format(path, j.to_string()),
            other => other,
        })
    }
}

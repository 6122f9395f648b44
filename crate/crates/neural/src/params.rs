//! Named parameter collections and their on-disk container.
//!
//! The container shares the 16-byte header used for images and sinograms
//! (`"SCT1"`, rows, cols, dtype tag, all little-endian u32). Parameters use
//! dtype tag [`PARAMS_TAG`]: the header holds `rows = 1`, `cols = total
//! value count`, followed by the values as little-endian f32 and then a
//! named-tensor index block:
//!
//! ```text
//! u32 entry_count
//! per entry: u32 name_len, name bytes (UTF-8), u32 ndim, ndim x u32 dims
//! ```
//!
//! Entries appear in storage order, so offsets follow from the shapes.

use std::io::{Read, Write};

use crate::error::{NeuralError, Result};
use crate::scalar::Real;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"SCT1";
/// Plain row-major f32 matrix.
pub const F32_TAG: u32 = 1;
/// f32 values followed by a named-tensor index block.
pub const PARAMS_TAG: u32 = 2;

/// Reads the 16-byte container header, returning `(rows, cols, tag)`.
pub fn read_header(r: &mut impl Read) -> Result<(u32, u32, u32)> {
    let mut buf = [0u8; 16];
    r.read_exact(&mut buf).map_err(|e| NeuralError::Format(e.to_string()))?;
    if &buf[..4] != MAGIC {
        return Err(NeuralError::Format("bad magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(buf[i..i + 4].try_into().unwrap());
    Ok((word(4), word(8), word(12)))
}

pub fn write_header(w: &mut impl Write, rows: u32, cols: u32, tag: u32) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    for v in [rows, cols, tag] {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Ordered, named set of trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Real> Default for Params<T> {
    fn default() -> Self {
        Self { entries: Vec::new() }
    }
}

impl<T: Real> Params<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor and returns its position.
    pub fn push(&mut self, name: impl Into<String>, t: Tensor<T>) -> usize {
        self.entries.push((name.into(), t));
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar values.
    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn tensor(&self, i: usize) -> &Tensor<T> {
        &self.entries[i].1
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.all_finite())
    }

    /// Records every tensor on `tape` as a differentiable leaf.
    pub fn register(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.entries.iter().map(|(_, t)| tape.leaf(t.clone())).collect()
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        Params {
            entries: self.entries.iter().map(|(n, t)| (n.clone(), t.cast())).collect(),
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        let total = self.num_values();
        write_header(w, 1, total as u32, PARAMS_TAG)?;
        for (_, t) in &self.entries {
            for v in t.data() {
                w.write_all(&(v.to_f64() as f32).to_le_bytes())?;
            }
        }
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (name, t) in &self.entries {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let (rows, cols, tag) = read_header(r)?;
        if tag != PARAMS_TAG || rows != 1 {
            return Err(NeuralError::Format(format!("not a parameter container (tag {tag})")));
        }
        let io = |e: std::io::Error| NeuralError::Format(e.to_string());
        let mut raw = vec![0u8; cols as usize * 4];
        r.read_exact(&mut raw).map_err(io)?;
        let values: Vec<T> = raw
            .chunks_exact(4)
            .map(|c| T::from_f64(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect();
        fn word(r: &mut impl Read) -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(|e| NeuralError::Format(e.to_string()))?;
            Ok(u32::from_le_bytes(b))
        }
        let count = word(r)?;
        let mut meta = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let len = word(r)? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name).map_err(io)?;
            let name = String::from_utf8(name).map_err(|e| NeuralError::Format(e.to_string()))?;
            let ndim = word(r)? as usize;
            let shape = (0..ndim).map(|_| word(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            meta.push((name, shape));
        }
        let mut offset = 0;
        let mut params = Params::new();
        for (name, shape) in meta {
            let n: usize = shape.iter().product();
            let end = offset + n;
            if end > values.len() {
                return Err(NeuralError::Format("index block overruns value block".into()));
            }
            params.push(name, Tensor::new(&shape, values[offset..end].to_vec())?);
            offset = end;
        }
        if offset != values.len() {
            return Err(NeuralError::Format("index block does not cover all values".into()));
        }
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trip() {
        let mut p = Params::<f32>::new();
        p.push("a.weight", Tensor::from_fn(&[2, 3], |i| i as f32 * 0.5));
        p.push("b", Tensor::scalar(-1.25));
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"SCT1");
        let q = Params::<f32>::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn rejects_plain_matrix_tag() {
        let mut buf = Vec::new();
        write_header(&mut buf, 1, 0, F32_TAG).unwrap();
        assert!(Params::<f32>::read_from(&mut buf.as_slice()).is_err());
    }
}

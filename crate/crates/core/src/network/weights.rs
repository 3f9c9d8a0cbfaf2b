//! Named weight tensors and the WBDL container format.
//!
//! WBDL layout: magic `WBDL`, u32-LE entry count, then per entry a u16-LE
//! path length, the UTF-8 path, a u8 rank, rank u32-LE dims, and the f32-LE
//! payload. Entries are written in ascending path order, so identical
//! bundles produce identical files.

use crate::maps::MapError;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const WBDL_MAGIC: &[u8; 4] = b"WBDL";
const MAX_ELEMENTS: u64 = 1 << 28;
const MAX_RANK: u8 = 4;

/// One named tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(dims: Vec<usize>) -> Self {
        let len = dims.iter().product();
        Tensor {
            dims,
            data: vec![0.0; len],
        }
    }

    pub fn filled(dims: Vec<usize>, value: f32) -> Self {
        let len = dims.iter().product();
        Tensor {
            dims,
            data: vec![value; len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// All learnable tensors of the network, keyed by canonical layer path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightBundle {
    tensors: BTreeMap<String, Tensor>,
}

impl WeightBundle {
    pub fn new() -> Self {
        WeightBundle::default()
    }

    pub fn insert(&mut self, path: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(path.into(), tensor);
    }

    pub fn get(&self, path: &str) -> Option<&Tensor> {
        self.tensors.get(path)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total element count across all tensors.
    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), MapError> {
        let mut out = BufWriter::new(File::create(path.as_ref())?);
        out.write_all(WBDL_MAGIC)?;
        out.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, tensor) in &self.tensors {
            let bytes = name.as_bytes();
            out.write_all(&(bytes.len() as u16).to_le_bytes())?;
            out.write_all(bytes)?;
            out.write_all(&[tensor.dims.len() as u8])?;
            for &d in &tensor.dims {
                out.write_all(&(d as u32).to_le_bytes())?;
            }
            for &v in &tensor.data {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, MapError> {
        let mut reader = BufReader::new(File::open(path.as_ref())?);
        let mut magic = [0u8; 4];
        read_exact(&mut reader, &mut magic).map_err(|_| MapError::BadMagic { expected: "WBDL" })?;
        if &magic != WBDL_MAGIC {
            return Err(MapError::BadMagic { expected: "WBDL" });
        }
        let mut count_buf = [0u8; 4];
        read_exact(&mut reader, &mut count_buf)?;
        let count = u32::from_le_bytes(count_buf);
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let mut len_buf = [0u8; 2];
            read_exact(&mut reader, &mut len_buf)?;
            let name_len = u16::from_le_bytes(len_buf) as usize;
            let mut name_buf = vec![0u8; name_len];
            read_exact(&mut reader, &mut name_buf)?;
            let name = String::from_utf8(name_buf)
                .map_err(|_| MapError::BadHeader("layer path is not UTF-8".into()))?;
            let mut rank_buf = [0u8; 1];
            read_exact(&mut reader, &mut rank_buf)?;
            let rank = rank_buf[0];
            if rank == 0 || rank > MAX_RANK {
                return Err(MapError::BadHeader(format!(
                    "tensor {name} has rank {rank}"
                )));
            }
            let mut dims = Vec::with_capacity(rank as usize);
            let mut total = 1u64;
            for _ in 0..rank {
                let mut dim_buf = [0u8; 4];
                read_exact(&mut reader, &mut dim_buf)?;
                let d = u32::from_le_bytes(dim_buf) as u64;
                total = total.saturating_mul(d);
                dims.push(d as usize);
            }
            if total == 0 || total > MAX_ELEMENTS {
                return Err(MapError::DimensionOverflow {
                    height: dims.first().copied().unwrap_or(0) as u64,
                    width: dims.get(1).copied().unwrap_or(0) as u64,
                    channels: dims.get(2).copied().unwrap_or(0) as u64,
                });
            }
            let mut bytes = vec![0u8; total as usize * 4];
            read_exact(&mut reader, &mut bytes)?;
            let data = bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            tensors.insert(name, Tensor { dims, data });
        }
        Ok(WeightBundle { tensors })
    }
}

fn read_exact(reader: &mut impl Read, buf: &mut [u8]) -> Result<(), MapError> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = reader.read(&mut buf[filled..])?;
        if n == 0 {
            return Err(MapError::Truncated {
                expected: buf.len(),
                found: filled,
            });
        }
        filled += n;
    }
    Ok(())
}

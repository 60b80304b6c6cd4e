//! Named-tensor container files.
//!
//! Layout: an 8-byte little-endian length prefix, a JSON header mapping
//! tensor names to `{dtype, shape, data_offsets}`, then contiguous raw
//! little-endian tensor data. This is the same layout used by the
//! `.safetensors` ecosystem, so externally published weight files load
//! directly.
//!
//! Only `F32` tensors are supported; anything else is rejected by name so
//! the caller knows which tensor to convert.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on header size; a corrupt length prefix should not trigger a
/// multi-gigabyte allocation.
const MAX_HEADER_BYTES: u64 = 100 * 1024 * 1024;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct HeaderEntry {
    dtype: String,
    shape: Vec<usize>,
    data_offsets: (u64, u64),
}

/// An open container file with its header parsed.
///
/// Tensor data is read lazily, one tensor at a time.
#[derive(Debug)]
pub struct TensorFile {
    path: PathBuf,
    entries: BTreeMap<String, HeaderEntry>,
    metadata: BTreeMap<String, String>,
    data_start: u64,
    file: File,
}

impl TensorFile {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut file = File::open(&path)
            .map_err(|e| Error::io(format!("open tensor file {}", path.display()), e))?;

        let mut len_buf = [0u8; 8];
        file.read_exact(&mut len_buf)
            .map_err(|e| Error::io(format!("read header length of {}", path.display()), e))?;
        let header_len = u64::from_le_bytes(len_buf);
        if header_len > MAX_HEADER_BYTES {
            return Err(Error::Validation(format!(
                "{}: header length {} exceeds limit",
                path.display(),
                header_len
            )));
        }

        let mut header_buf = vec![0u8; header_len as usize];
        file.read_exact(&mut header_buf)
            .map_err(|e| Error::io(format!("read header of {}", path.display()), e))?;

        let mut raw: BTreeMap<String, serde_json::Value> = serde_json::from_slice(&header_buf)
            .map_err(|e| Error::json(format!("parse header of {}", path.display()), e))?;

        let metadata = match raw.remove("__metadata__") {
            Some(v) => serde_json::from_value(v)
                .map_err(|e| Error::json(format!("parse __metadata__ of {}", path.display()), e))?,
            None => BTreeMap::new(),
        };

        let data_start = 8 + header_len;
        let file_len = file
            .metadata()
            .map_err(|e| Error::io(format!("stat {}", path.display()), e))?
            .len();
        let data_len = file_len.saturating_sub(data_start);

        let mut entries = BTreeMap::new();
        for (name, value) in raw {
            let entry: HeaderEntry = serde_json::from_value(value)
                .map_err(|e| Error::json(format!("parse header entry `{name}`"), e))?;
            let (begin, end) = entry.data_offsets;
            if begin > end || end > data_len {
                return Err(Error::TensorMismatch {
                    name,
                    detail: format!(
                        "data_offsets ({begin}, {end}) outside data section of length {data_len}"
                    ),
                });
            }
            entries.insert(name, entry);
        }

        Ok(TensorFile {
            path,
            entries,
            metadata,
            data_start,
            file,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Names of all tensors in the container, sorted.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    /// Shape of a tensor without reading its data.
    pub fn shape(&self, name: &str) -> Result<&[usize]> {
        self.entries
            .get(name)
            .map(|e| e.shape.as_slice())
            .ok_or_else(|| Error::MissingTensor {
                name: name.to_string(),
                path: self.path.clone(),
            })
    }

    /// Read a tensor as a flat `f32` vector plus its shape.
    pub fn read_f32(&mut self, name: &str) -> Result<(Vec<f32>, Vec<usize>)> {
        let entry = self
            .entries
            .get(name)
            .ok_or_else(|| Error::MissingTensor {
                name: name.to_string(),
                path: self.path.clone(),
            })?
            .clone();

        if entry.dtype != "F32" {
            return Err(Error::TensorMismatch {
                name: name.to_string(),
                detail: format!("dtype {} unsupported (expected F32)", entry.dtype),
            });
        }

        let byte_len = (entry.data_offsets.1 - entry.data_offsets.0) as usize;
        let elems: usize = entry.shape.iter().product();
        if byte_len != elems * 4 {
            return Err(Error::TensorMismatch {
                name: name.to_string(),
                detail: format!(
                    "shape {:?} implies {} bytes but data span is {} bytes",
                    entry.shape,
                    elems * 4,
                    byte_len
                ),
            });
        }

        self.file
            .seek(SeekFrom::Start(self.data_start + entry.data_offsets.0))
            .map_err(|e| Error::io(format!("seek tensor `{name}`"), e))?;
        let mut buf = vec![0u8; byte_len];
        self.file
            .read_exact(&mut buf)
            .map_err(|e| Error::io(format!("read tensor `{name}`"), e))?;

        let mut out = Vec::with_capacity(elems);
        for chunk in buf.chunks_exact(4) {
            out.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
        }
        Ok((out, entry.shape))
    }
}

/// One-shot writer. Tensors are laid out in sorted-name order so identical
/// inputs produce byte-identical files.
pub struct TensorFileWriter {
    tensors: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
    metadata: BTreeMap<String, String>,
}

impl TensorFileWriter {
    pub fn new() -> Self {
        TensorFileWriter {
            tensors: BTreeMap::new(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn metadata(&mut self, key: impl Into<String>, value: impl Into<String>) -> &mut Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        data: Vec<f32>,
    ) -> Result<&mut Self> {
        let name = name.into();
        let elems: usize = shape.iter().product();
        if elems != data.len() {
            return Err(Error::TensorMismatch {
                name,
                detail: format!("shape {:?} does not match {} elements", shape, data.len()),
            });
        }
        if self.tensors.insert(name.clone(), (shape, data)).is_some() {
            return Err(Error::Validation(format!("duplicate tensor name `{name}`")));
        }
        Ok(self)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();

        let mut header: BTreeMap<String, serde_json::Value> = BTreeMap::new();
        if !self.metadata.is_empty() {
            header.insert(
                "__metadata__".to_string(),
                serde_json::to_value(&self.metadata).expect("string map serializes"),
            );
        }

        let mut offset = 0u64;
        for (name, (shape, data)) in &self.tensors {
            let byte_len = (data.len() * 4) as u64;
            let entry = HeaderEntry {
                dtype: "F32".to_string(),
                shape: shape.clone(),
                data_offsets: (offset, offset + byte_len),
            };
            header.insert(
                name.clone(),
                serde_json::to_value(&entry).expect("header entry serializes"),
            );
            offset += byte_len;
        }

        let header_json = serde_json::to_vec(&header).expect("header serializes");
        let mut file = File::create(path)
            .map_err(|e| Error::io(format!("create tensor file {}", path.display()), e))?;
        file.write_all(&(header_json.len() as u64).to_le_bytes())
            .map_err(|e| Error::io("write header length", e))?;
        file.write_all(&header_json)
            .map_err(|e| Error::io("write header", e))?;
        for (_, (_, data)) in &self.tensors {
            let mut bytes = Vec::with_capacity(data.len() * 4);
            for v in data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            file.write_all(&bytes)
                .map_err(|e| Error::io("write tensor data", e))?;
        }
        Ok(())
    }
}

impl Default for TensorFileWriter {
    fn default() -> Self {
        Self::new()
    }
}

//! Single-file container for named arrays plus a JSON header.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, UTF-8
//! JSON header, then the concatenated little-endian array payload. The
//! header records each array's dtype, shape, and byte range, and a SHA-256
//! of the payload that is verified on load.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"XMODARC\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
    U8,
    I16,
}

impl DType {
    fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
            DType::U8 => 1,
            DType::I16 => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub bytes: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    kind: String,
    format_version: u32,
    meta: serde_json::Value,
    arrays: Vec<ArrayEntry>,
    payload_sha256: String,
}

#[derive(Debug)]
pub struct ArchiveWriter {
    kind: String,
    meta: serde_json::Value,
    entries: Vec<ArrayEntry>,
    payload: Vec<u8>,
}

impl ArchiveWriter {
    pub fn new(kind: impl Into<String>, meta: serde_json::Value) -> Self {
        Self {
            kind: kind.into(),
            meta,
            entries: Vec::new(),
            payload: Vec::new(),
        }
    }

    fn push(&mut self, name: &str, dtype: DType, shape: &[usize], bytes: impl IntoIterator<Item = u8>) {
        let offset = self.payload.len() as u64;
        self.payload.extend(bytes);
        self.entries.push(ArrayEntry {
            name: name.to_string(),
            dtype,
            shape: shape.to_vec(),
            offset,
            bytes: self.payload.len() as u64 - offset,
        });
    }

    pub fn add_f32(&mut self, name: &str, shape: &[usize], data: &[f32]) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.push(name, DType::F32, shape, data.iter().flat_map(|v| v.to_le_bytes()));
    }

    pub fn add_f64(&mut self, name: &str, shape: &[usize], data: &[f64]) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.push(name, DType::F64, shape, data.iter().flat_map(|v| v.to_le_bytes()));
    }

    pub fn add_u8(&mut self, name: &str, shape: &[usize], data: &[u8]) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.push(name, DType::U8, shape, data.iter().copied());
    }

    pub fn add_i16(&mut self, name: &str, shape: &[usize], data: &[i16]) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.push(name, DType::I16, shape, data.iter().flat_map(|v| v.to_le_bytes()));
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            kind: self.kind.clone(),
            format_version: FORMAT_VERSION,
            meta: self.meta.clone(),
            arrays: self.entries.clone(),
            payload_sha256: hex::encode(Sha256::digest(&self.payload)),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(20 + header.len() + self.payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Writes the archive and returns the SHA-256 of the whole file.
    pub fn write(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut f = fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}

#[derive(Debug)]
pub struct Archive {
    path: PathBuf,
    header: Header,
    payload: Vec<u8>,
}

impl Archive {
    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let bytes = fs::read(path)?;
        Self::from_bytes(path, bytes)
    }

    pub fn from_bytes(path: &Path, bytes: Vec<u8>) -> Result<Self> {
        let bad = |message: String| Error::Format {
            path: path.to_path_buf(),
            message,
        };
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not an archive (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = 20usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| bad("truncated header".into()))?;
        let header: Header = serde_json::from_slice(&bytes[20..body])?;
        let payload = bytes[body..].to_vec();
        if hex::encode(Sha256::digest(&payload)) != header.payload_sha256 {
            return Err(bad("payload digest mismatch".into()));
        }
        for e in &header.arrays {
            let expected = e.shape.iter().product::<usize>() * e.dtype.width();
            if e.bytes as usize != expected || (e.offset + e.bytes) as usize > payload.len() {
                return Err(bad(format!("array {} has an inconsistent extent", e.name)));
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            header,
            payload,
        })
    }

    pub fn kind(&self) -> &str {
        &self.header.kind
    }

    pub fn meta(&self) -> &serde_json::Value {
        &self.header.meta
    }

    pub fn payload_digest(&self) -> &str {
        &self.header.payload_sha256
    }

    pub fn entries(&self) -> &[ArrayEntry] {
        &self.header.arrays
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.header.kind != kind {
            return Err(Error::Format {
                path: self.path.clone(),
                message: format!("expected a {kind} archive, found {}", self.header.kind),
            });
        }
        Ok(())
    }

    fn raw(&self, name: &str, dtype: DType) -> Result<(&ArrayEntry, &[u8])> {
        let entry = self
            .header
            .arrays
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Format {
                path: self.path.clone(),
                message: format!("missing array {name}"),
            })?;
        if entry.dtype != dtype {
            return Err(Error::Format {
                path: self.path.clone(),
                message: format!("array {name} has dtype {:?}, expected {dtype:?}", entry.dtype),
            });
        }
        let start = entry.offset as usize;
        Ok((entry, &self.payload[start..start + entry.bytes as usize]))
    }

    pub fn f32(&self, name: &str) -> Result<(Vec<usize>, Vec<f32>)> {
        let (e, b) = self.raw(name, DType::F32)?;
        let data = b.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok((e.shape.clone(), data))
    }

    pub fn f64(&self, name: &str) -> Result<(Vec<usize>, Vec<f64>)> {
        let (e, b) = self.raw(name, DType::F64)?;
        let data = b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok((e.shape.clone(), data))
    }

    pub fn u8(&self, name: &str) -> Result<(Vec<usize>, Vec<u8>)> {
        let (e, b) = self.raw(name, DType::U8)?;
        Ok((e.shape.clone(), b.to_vec()))
    }

    pub fn i16(&self, name: &str) -> Result<(Vec<usize>, Vec<i16>)> {
        let (e, b) = self.raw(name, DType::I16)?;
        let data = b.chunks_exact(2).map(|c| i16::from_le_bytes(c.try_into().unwrap())).collect();
        Ok((e.shape.clone(), data))
    }

    pub fn meta_field<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<T> {
        let value = self.header.meta.get(key).cloned().ok_or_else(|| Error::Format {
            path: self.path.clone(),
            message: format!("missing metadata field {key}"),
        })?;
        Ok(serde_json::from_value(value)?)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn round_trip_and_tamper_detection() {
        let mut w = ArchiveWriter::new("test", json!({"answer": 42}));
        w.add_f32("a", &[2, 2], &[1.0, -2.0, 3.5, 0.0]);
        w.add_u8("b", &[3], &[0, 128, 255]);
        w.add_i16("c", &[2], &[-32767, 32767]);
        let bytes = w.to_bytes().unwrap();
        let a = Archive::from_bytes(Path::new("mem"), bytes.clone()).unwrap();
        assert_eq!(a.kind(), "test");
        assert_eq!(a.meta_field::<i32>("answer").unwrap(), 42);
        assert_eq!(a.f32("a").unwrap(), (vec![2, 2], vec![1.0, -2.0, 3.5, 0.0]));
        assert_eq!(a.u8("b").unwrap().1, vec![0, 128, 255]);
        assert_eq!(a.i16("c").unwrap().1, vec![-32767, 32767]);
        assert!(a.f32("b").is_err());

        let mut tampered = bytes;
        let last = tampered.len() - 1;
        tampered[last] ^= 1;
        assert!(Archive::from_bytes(Path::new("mem"), tampered).is_err());
    }

    #[test]
    fn missing_file_is_reported() {
        let err = Archive::read(Path::new("/nonexistent/x.xma")).unwrap_err();
        assert!(matches!(err, Error::MissingArtifact(_)));
    }
}

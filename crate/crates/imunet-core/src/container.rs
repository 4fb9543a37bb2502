//! Versioned binary container for named f64 arrays plus a text header.
//!
//! One format backs both model checkpoints and windowed datasets; they differ
//! only in magic string and header keys. Layout, all integers little-endian:
//!
//! ```text
//! magic            8 bytes ASCII
//! version          u32
//! header_len       u64, then UTF-8 `key=value` lines
//! n_arrays         u64
//! per array:       name_len u64 + UTF-8, dtype_len u64 + UTF-8 ("f64"),
//!                  ndim u64, dims u64 x ndim, data f64 x product(dims)
//! checksum         SHA-256 of every preceding byte, 32 bytes
//! ```
//!
//! Reads verify the checksum before parsing anything, so truncation or
//! corruption anywhere in the file surfaces as a checksum error.

use sha2::{Digest, Sha256};
use std::path::Path;

use crate::{Error, Result};

pub const CONTAINER_VERSION: u32 = 1;
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"IMUNETCK";
pub const DATASET_MAGIC: &[u8; 8] = b"IMUNETDS";

const DTYPE_F64: &str = "f64";
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedArray {
    pub fn new(name: &str, shape: Vec<usize>, data: Vec<f64>) -> Result<NamedArray> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(Error::Shape(format!(
                "array {}: shape {:?} wants {} values, got {}",
                name,
                shape,
                expect,
                data.len()
            )));
        }
        Ok(NamedArray {
            name: name.to_string(),
            shape,
            data,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub header: Vec<(String, String)>,
    pub arrays: Vec<NamedArray>,
}

impl Container {
    pub fn header_get(&self, key: &str) -> Option<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn array(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
    }
}

fn push_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_str(buf: &mut Vec<u8>, s: &str) {
    push_u64(buf, s.len() as u64);
    buf.extend_from_slice(s.as_bytes());
}

/// Serialize header and arrays into container bytes (checksum included).
pub fn encode_container(
    magic: &[u8; 8],
    header: &[(String, String)],
    arrays: &[NamedArray],
) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(magic);
    buf.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());

    let mut text = String::new();
    for (k, v) in header {
        if k.contains('=') || k.contains('\n') || v.contains('\n') {
            return Err(Error::InvalidArgument(format!(
                "header key/value may not contain '=' in key or newlines: {k}"
            )));
        }
        text.push_str(k);
        text.push('=');
        text.push_str(v);
        text.push('\n');
    }
    push_str(&mut buf, &text);

    push_u64(&mut buf, arrays.len() as u64);
    for a in arrays {
        let expect: usize = a.shape.iter().product();
        if expect != a.data.len() {
            return Err(Error::Shape(format!(
                "array {}: shape {:?} wants {} values, got {}",
                a.name,
                a.shape,
                expect,
                a.data.len()
            )));
        }
        push_str(&mut buf, &a.name);
        push_str(&mut buf, DTYPE_F64);
        push_u64(&mut buf, a.shape.len() as u64);
        for &d in &a.shape {
            push_u64(&mut buf, d as u64);
        }
        for &v in &a.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    Ok(buf)
}

pub fn write_container(
    path: &Path,
    magic: &[u8; 8],
    header: &[(String, String)],
    arrays: &[NamedArray],
) -> Result<()> {
    let bytes = encode_container(magic, header, arrays)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Checkpoint {
                field: what.to_string(),
                reason: "runs past end of file".to_string(),
            }),
        }
    }

    fn take_u32(&mut self, what: &'static str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn take_u64(&mut self, what: &'static str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn take_len(&mut self, what: &'static str) -> Result<usize> {
        let v = self.take_u64(what)?;
        let remaining = (self.buf.len() - self.pos) as u64;
        if v > remaining {
            return Err(Error::Checkpoint {
                field: what.to_string(),
                reason: format!("length {} exceeds remaining {} bytes", v, remaining),
            });
        }
        Ok(v as usize)
    }

    fn take_str(&mut self, what: &'static str) -> Result<String> {
        let n = self.take_len(what)?;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Checkpoint {
            field: what.to_string(),
            reason: "not valid UTF-8".to_string(),
        })
    }
}

/// Parse container bytes; checksum is verified before any field is trusted.
pub fn decode_container(bytes: &[u8], magic: &[u8; 8]) -> Result<Container> {
    if bytes.len() < CHECKSUM_LEN {
        return Err(Error::Checkpoint {
            field: "checksum".to_string(),
            reason: format!("file is {} bytes, too short to hold a checksum", bytes.len()),
        });
    }
    let (body, stored) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    let digest = Sha256::digest(body);
    if digest.as_slice() != stored {
        return Err(Error::Checkpoint {
            field: "checksum".to_string(),
            reason: "stored checksum does not match file contents".to_string(),
        });
    }

    let mut cur = Cursor { buf: body, pos: 0 };
    let got_magic = cur.take(8, "magic")?;
    if got_magic != magic {
        return Err(Error::Checkpoint {
            field: "magic".to_string(),
            reason: format!(
                "expected {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(got_magic)
            ),
        });
    }
    let version = cur.take_u32("version")?;
    if version != CONTAINER_VERSION {
        return Err(Error::Checkpoint {
            field: "version".to_string(),
            reason: format!("found {}, this build reads {}", version, CONTAINER_VERSION),
        });
    }

    let text = cur.take_str("header")?;
    let mut header = Vec::new();
    for line in text.lines() {
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Checkpoint {
            field: "header".to_string(),
            reason: format!("line without '=': {line}"),
        })?;
        header.push((k.to_string(), v.to_string()));
    }

    let n_arrays = cur.take_u64("arrays")? as usize;
    let mut arrays = Vec::new();
    for _ in 0..n_arrays {
        let name = cur.take_str("array name")?;
        let dtype = cur.take_str("array dtype")?;
        if dtype != DTYPE_F64 {
            return Err(Error::Checkpoint {
                field: format!("array {name} dtype"),
                reason: format!("unsupported dtype {dtype}"),
            });
        }
        let ndim = cur.take_u64("array ndim")? as usize;
        let mut shape = Vec::with_capacity(ndim);
        let mut count: u64 = 1;
        for _ in 0..ndim {
            let d = cur.take_u64("array dim")?;
            count = count.checked_mul(d).ok_or_else(|| Error::Checkpoint {
                field: format!("array {name} shape"),
                reason: "dimension product overflows".to_string(),
            })?;
            shape.push(d as usize);
        }
        let raw = cur.take(
            (count as usize).checked_mul(8).ok_or_else(|| Error::Checkpoint {
                field: format!("array {name} shape"),
                reason: "byte size overflows".to_string(),
            })?,
            "array data",
        )?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        arrays.push(NamedArray {
            name,
            shape,
            data,
        });
    }
    if cur.pos != body.len() {
        return Err(Error::Checkpoint {
            field: "layout".to_string(),
            reason: format!("{} trailing bytes after last array", body.len() - cur.pos),
        });
    }
    Ok(Container { header, arrays })
}

pub fn read_container(path: &Path, magic: &[u8; 8]) -> Result<Container> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    decode_container(&bytes, magic)
}

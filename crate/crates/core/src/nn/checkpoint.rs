//! Checkpoint container: magic, a `key=value` config block, then named
//! 32-bit tensors.
//!
//! ```text
//! "ILRCKPT1"
//! u32 config_len, config_len bytes of UTF-8 `key=value` lines
//! u32 n_tensors
//! per tensor: u32 name_len, name, u32 rows, u32 cols, rows*cols f32
//! ```
//! All integers and floats are little-endian.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::mat::Mat;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ILRCKPT1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub config: BTreeMap<String, String>,
    pub tensors: Vec<(String, Mat)>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!("truncated {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn utf8(&mut self, n: usize, what: &str) -> Result<String> {
        let at = self.pos as u64;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Format {
            offset: at,
            message: format!("{what} is not UTF-8"),
        })
    }
}

impl Checkpoint {
    pub fn get(&self, key: &str) -> Result<&str> {
        self.config
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Config(format!("checkpoint lacks config key {key}")))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.parse()
            .map_err(|_| Error::Config(format!("checkpoint key {key} has bad value {v:?}")))
    }

    pub fn tensor(&self, name: &str) -> Option<&Mat> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = CHECKPOINT_MAGIC.to_vec();
        let mut text = String::new();
        for (k, v) in &self.config {
            text.push_str(k);
            text.push('=');
            text.push_str(v);
            text.push('\n');
        }
        put_u32(&mut out, text.len());
        out.extend_from_slice(text.as_bytes());
        put_u32(&mut out, self.tensors.len());
        for (name, m) in &self.tensors {
            put_u32(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, m.rows());
            put_u32(&mut out, m.cols());
            for &v in m.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "bad checkpoint magic".into(),
            });
        }
        let mut r = Reader { bytes, pos: 8 };
        let n = r.u32("config length")?;
        let text = r.utf8(n, "config block")?;
        let mut config = BTreeMap::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
                offset: 12,
                message: format!("config line without '=': {line:?}"),
            })?;
            config.insert(k.to_string(), v.to_string());
        }
        let count = r.u32("tensor count")?;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32("tensor name length")?;
            let name = r.utf8(len, "tensor name")?;
            let rows = r.u32("tensor rows")?;
            let cols = r.u32("tensor cols")?;
            let at = r.pos as u64;
            let raw = r.take(rows * cols * 4, "tensor payload")?;
            let data: Vec<f64> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format {
                    offset: at,
                    message: format!("non-finite value in tensor {name}"),
                });
            }
            tensors.push((name, Mat::from_vec(rows, cols, data)));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format {
                offset: r.pos as u64,
                message: "trailing bytes after last tensor".into(),
            });
        }
        Ok(Self { config, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

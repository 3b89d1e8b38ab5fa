//! Versioned binary container for named tensors.
//!
//! Layout (little endian):
//!
//! ```text
//! magic   b"TGCK"
//! version u32
//! kind    u32 length + UTF-8
//! meta    u32 length + UTF-8 `key=value` lines
//! count   u32
//! count x { name: u32 length + UTF-8, rows: u64, cols: u64, data: rows*cols f64 }
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{ParamSet, Tensor};

const MAGIC: &[u8; 4] = b"TGCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: BTreeMap<String, String>,
    pub params: ParamSet,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>, meta: BTreeMap<String, String>, params: ParamSet) -> Self {
        Checkpoint {
            kind: kind.into(),
            meta,
            params,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_str(&mut out, &self.kind);
        put_str(&mut out, &format_kv(&self.meta));
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in self.params.iter() {
            put_str(&mut out, name);
            out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let r = &mut bytes;
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = get_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let kind = get_str(r)?;
        let meta = parse_kv(&get_str(r)?)?;
        let count = get_u32(r)? as usize;
        let mut params = ParamSet::new();
        for _ in 0..count {
            let name = get_str(r)?;
            let rows = get_u64(r)? as usize;
            let cols = get_u64(r)? as usize;
            let n = rows
                .checked_mul(cols)
                .filter(|n| n * 8 <= r.len())
                .ok_or_else(|| Error::Checkpoint(format!("tensor {name} truncated")))?;
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                let mut b = [0u8; 8];
                read_exact(r, &mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            params.add(name, Tensor::from_vec(rows, cols, data));
        }
        if !r.is_empty() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Checkpoint { kind, meta, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Hex SHA-256 of the serialized form.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn meta_get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.meta
            .get(key)
            .ok_or_else(|| Error::Checkpoint(format!("missing meta key `{key}`")))?
            .parse()
            .map_err(|_| Error::Checkpoint(format!("bad value for meta key `{key}`")))
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Checkpoint("unexpected end of data".into()))
}

fn get_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64(r: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_str(r: &mut &[u8]) -> Result<String> {
    let n = get_u32(r)? as usize;
    if n > r.len() {
        return Err(Error::Checkpoint("string length past end".into()));
    }
    let mut buf = vec![0u8; n];
    read_exact(r, &mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Checkpoint("invalid utf-8".into()))
}

/// `key=value` lines, sorted by key.
pub fn format_kv(map: &BTreeMap<String, String>) -> String {
    let mut s = String::new();
    for (k, v) in map {
        s.push_str(k);
        s.push('=');
        s.push_str(v);
        s.push('\n');
    }
    s
}

/// Parses `key=value` lines; blank lines and `#` comments are ignored.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            reason: format!("expected key=value, got `{line}`"),
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

pub fn write_kv_file(map: &BTreeMap<String, String>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(format_kv(map).as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn read_kv_file(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_kv(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut p = ParamSet::new();
        p.add("a", Tensor::from_vec(2, 2, vec![1.0, -2.5, 3.25, f64::MIN_POSITIVE]));
        p.add("b.bias", Tensor::zeros(3, 1));
        let mut meta = BTreeMap::new();
        meta.insert("mode".to_string(), "transductive".to_string());
        let ck = Checkpoint::new("test", meta, p);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.digest(), ck.digest());
    }

    #[test]
    fn rejects_corruption() {
        let ck = Checkpoint::new("x", BTreeMap::new(), ParamSet::new());
        let mut bytes = ck.to_bytes();
        bytes[0] = b'X';
        assert!(Checkpoint::from_bytes(&bytes).is_err());
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn kv_parsing() {
        let m = parse_kv("# c\nseed = 3\n\nmode=inductive\n").unwrap();
        assert_eq!(m["seed"], "3");
        assert_eq!(m["mode"], "inductive");
        assert!(parse_kv("oops").is_err());
    }
}

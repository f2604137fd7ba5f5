//! ESWT weight files.
//!
//! ```text
//! "ESWT"  u32 version=1  u64 entry_count
//! per entry: u32 name_len, name (UTF-8), u32 ndim, u64 dims[ndim], f32 data[prod(dims)]
//! ```
//!
//! All integers and floats little-endian, no padding.

use std::fs;
use std::path::Path;

use super::store::{WeightArray, WeightStore};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ESWT";
pub const VERSION: u32 = 1;

pub fn encode_eswt(store: &WeightStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + store.element_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u64).to_le_bytes());
    for (name, array) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(array.dims.len() as u32).to_le_bytes());
        for &d in &array.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &array.data {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
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
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::WeightFormat(format!("truncated file while reading {what} at byte {}", self.pos))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_eswt(bytes: &[u8]) -> Result<WeightStore> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic").ok() != Some(MAGIC.as_slice()) {
        return Err(Error::WeightFormat("bad magic".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::WeightFormat(format!(
            "version mismatch: file {version}, supported {VERSION}"
        )));
    }
    let count = r.u64("entry count")?;
    let mut store = WeightStore::new();
    for _ in 0..count {
        let name_len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| Error::WeightFormat("entry name is not UTF-8".into()))?
            .to_string();
        let ndim = r.u32("ndim")? as usize;
        let mut dims = Vec::with_capacity(ndim.min(16));
        for _ in 0..ndim {
            dims.push(r.u64("dims")? as usize);
        }
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::WeightFormat(format!("dims of {name:?} overflow")))?;
        let data = r
            .take(n, &name)?
            .chunks_exact(4)
            .map(|b| f32::from_bits(u32::from_le_bytes(b.try_into().unwrap())))
            .collect();
        store.insert(name, WeightArray::new(dims, data)?)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::WeightFormat(format!(
            "{} trailing bytes after last entry",
            bytes.len() - r.pos
        )));
    }
    Ok(store)
}

pub fn save_eswt(store: &WeightStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_eswt(store)).map_err(|e| Error::io(path, e))
}

pub fn load_eswt(path: impl AsRef<Path>) -> Result<WeightStore> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_eswt(&bytes)
}

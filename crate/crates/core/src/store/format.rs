//! The EMB1 container.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! offset  size        field
//! 0       4           magic "EMB1"
//! 4       4           u32 version (= 1)
//! 8       4           u32 count
//! 12      4           u32 dim (> 0)
//! 16      4*count*dim f32 payload, row-major
//! ..      8           u64 byte length L of the metadata block
//! ..      L           UTF-8 JSON lines, each terminated by '\n'
//! ```
//!
//! The metadata block holds one `{"id": .., "labels": {task: label}}` line per
//! row, in row order. It may be preceded by a single header line of the form
//! `{"header": {..}}`; prompt banks use it to record their task and template.
//! Nothing may follow the metadata block.

use std::fs;
use std::path::Path;

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::store::{EmbeddingSet, RowMeta};

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const VERSION: u32 = 1;

/// Header object carried in the metadata block, if any.
pub type Header = Map<String, Value>;

/// Serializes `set` (and an optional header) to EMB1 bytes.
pub fn encode(set: &EmbeddingSet, header: Option<&Header>) -> Result<Vec<u8>> {
    set.validate()?;
    let count = u32::try_from(set.len()).map_err(|_| Error::invariant("too many rows for EMB1"))?;
    let dim = u32::try_from(set.dim()).map_err(|_| Error::invariant("dim too large for EMB1"))?;

    let mut meta = Vec::new();
    if let Some(h) = header {
        let line = serde_json::json!({ "header": h });
        serde_json::to_writer(&mut meta, &line)?;
        meta.push(b'\n');
    }
    for m in set.meta() {
        serde_json::to_writer(&mut meta, m)?;
        meta.push(b'\n');
    }

    let mut out = Vec::with_capacity(16 + set.vectors().len() * 4 + 8 + meta.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    for x in set.vectors() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::format(format!(
                    "truncated file: {what} needs {n} bytes at offset {}, {} available",
                    self.pos,
                    self.bytes.len() - self.pos
                ))
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

/// Parses EMB1 bytes, validating every [`EmbeddingSet`] invariant.
pub fn decode(bytes: &[u8]) -> Result<(EmbeddingSet, Option<Header>)> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::format(format!("bad magic {magic:?}, expected \"EMB1\"")));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported EMB1 version {version}")));
    }
    let count = cur.u32("count")? as usize;
    let dim = cur.u32("dim")? as usize;
    if dim == 0 {
        return Err(Error::format("dim must be positive"));
    }
    let n_values = count
        .checked_mul(dim)
        .ok_or_else(|| Error::format("count * dim overflows"))?;
    let payload = cur.take(n_values * 4, "payload")?;
    let vectors: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();

    let meta_len = cur.u64("metadata length")?;
    let meta_len = usize::try_from(meta_len).map_err(|_| Error::format("metadata too large"))?;
    let meta_bytes = cur.take(meta_len, "metadata block")?;
    if cur.pos != bytes.len() {
        return Err(Error::format(format!(
            "{} trailing bytes after metadata; payload does not match count={count}, dim={dim}",
            bytes.len() - cur.pos
        )));
    }
    let text = std::str::from_utf8(meta_bytes).map_err(|e| Error::format(format!("metadata is not UTF-8: {e}")))?;

    let mut lines = text.lines().filter(|l| !l.is_empty()).peekable();
    let mut header = None;
    if let Some(first) = lines.peek() {
        let v: Value = serde_json::from_str(first)?;
        if let Some(Value::Object(h)) = v.get("header") {
            header = Some(h.clone());
            lines.next();
        }
    }
    let meta = lines
        .map(|l| serde_json::from_str::<RowMeta>(l).map_err(Error::from))
        .collect::<Result<Vec<_>>>()?;
    if meta.len() != count {
        return Err(Error::format(format!(
            "header declares {count} rows but metadata has {} records",
            meta.len()
        )));
    }
    Ok((EmbeddingSet::new(dim, vectors, meta)?, header))
}

/// Writes `set` to `path` in the EMB1 format.
pub fn write_store(set: &EmbeddingSet, path: &Path) -> Result<()> {
    write_store_with_header(set, None, path)
}

pub fn write_store_with_header(set: &EmbeddingSet, header: Option<&Header>, path: &Path) -> Result<()> {
    let bytes = encode(set, header)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads an EMB1 file, ignoring any header line.
pub fn read_store(path: &Path) -> Result<EmbeddingSet> {
    Ok(read_store_with_header(path)?.0)
}

pub fn read_store_with_header(path: &Path) -> Result<(EmbeddingSet, Option<Header>)> {
    decode(&fs::read(path)?)
}

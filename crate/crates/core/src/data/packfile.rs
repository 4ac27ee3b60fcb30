//! Binary packed-batch file.
//!
//! Little-endian layout:
//!
//! ```text
//! "PACK" | version u32 | seq_len u32 | vocab_size u32 | row_count u64
//! per row: ids u32×L | n_bounds u32 | bounds u32×n | n_masks u32
//!          | positions u32×n | labels i32×n
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::packing::{PackedRow, IGNORE_LABEL};

pub const PACK_MAGIC: &[u8; 4] = b"PACK";
pub const PACK_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackFile {
    pub seq_len: u32,
    pub vocab_size: u32,
    pub rows: Vec<PackedRow>,
}

impl PackFile {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(PACK_MAGIC);
        out.extend_from_slice(&PACK_VERSION.to_le_bytes());
        out.extend_from_slice(&self.seq_len.to_le_bytes());
        out.extend_from_slice(&self.vocab_size.to_le_bytes());
        out.extend_from_slice(&(self.rows.len() as u64).to_le_bytes());
        for row in &self.rows {
            if row.ids.len() != self.seq_len as usize {
                return Err(Error::Shape(format!(
                    "row has {} ids, file seq_len is {}",
                    row.ids.len(),
                    self.seq_len
                )));
            }
            for &id in &row.ids {
                out.extend_from_slice(&id.to_le_bytes());
            }
            out.extend_from_slice(&(row.boundaries.len() as u32).to_le_bytes());
            for &b in &row.boundaries {
                out.extend_from_slice(&b.to_le_bytes());
            }
            out.extend_from_slice(&(row.mask_positions.len() as u32).to_le_bytes());
            for &p in &row.mask_positions {
                out.extend_from_slice(&p.to_le_bytes());
            }
            for &p in &row.mask_positions {
                out.extend_from_slice(&row.labels[p as usize].to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(4)? != PACK_MAGIC {
            return Err(Error::Format("not a PACK file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != PACK_VERSION {
            return Err(Error::Format(format!("unsupported PACK version {version}")));
        }
        let seq_len = r.u32()?;
        let vocab_size = r.u32()?;
        let n_rows = r.u64()?;
        let mut rows = Vec::new();
        for _ in 0..n_rows {
            let ids = r.u32s(seq_len as usize)?;
            if let Some(bad) = ids.iter().find(|&&id| id >= vocab_size) {
                return Err(Error::Format(format!("id {bad} outside vocab of {vocab_size}")));
            }
            let n = r.u32()? as usize;
            let boundaries = r.u32s(n)?;
            let m = r.u32()? as usize;
            let mask_positions = r.u32s(m)?;
            let mut labels = vec![IGNORE_LABEL; seq_len as usize];
            for &p in &mask_positions {
                let v = r.u32()? as i32;
                *labels
                    .get_mut(p as usize)
                    .ok_or_else(|| Error::Format(format!("mask position {p} outside row")))? = v;
            }
            let row = PackedRow {
                ids,
                boundaries,
                mask_positions,
                labels,
            };
            row.validate()
                .map_err(|e| Error::Format(format!("invalid row: {e}")))?;
            rows.push(row);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after last row".into()));
        }
        Ok(PackFile {
            seq_len,
            vocab_size,
            rows,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        PackFile::from_bytes(&buf)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated PACK file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u32s(&mut self, n: usize) -> Result<Vec<u32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("bad count".into()))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

//! Binary index snapshot.
//!
//! Layout (little endian): 8-byte magic, u32 format version, u64 total
//! edges, u64 total entities, u64 record count, then per cited DOI in
//! byte order: u32 length, DOI bytes, u64 count.

use std::collections::HashMap;
use std::io::{self, Read, Write};

use thiserror::Error;

use super::CitationIndex;
use crate::doi::Doi;

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"OCINDEG\0";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Longest DOI accepted when reading a snapshot.
const MAX_DOI_LEN: u32 = 4096;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("not an index snapshot (bad magic)")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CitationIndex {
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> io::Result<()> {
        let entries = self.sorted_entries();
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&self.total_edges.to_le_bytes())?;
        w.write_all(&self.total_entities.to_le_bytes())?;
        w.write_all(&(entries.len() as u64).to_le_bytes())?;
        for (doi, count) in entries {
            let bytes = doi.as_str().as_bytes();
            w.write_all(&(bytes.len() as u32).to_le_bytes())?;
            w.write_all(bytes)?;
            w.write_all(&count.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self, SnapshotError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != SNAPSHOT_VERSION {
            return Err(SnapshotError::UnsupportedVersion(version));
        }
        let total_edges = read_u64(&mut r)?;
        let total_entities = read_u64(&mut r)?;
        let records = read_u64(&mut r)?;
        let mut in_degree = HashMap::with_capacity(records.min(1 << 24) as usize);
        let mut sum = 0u64;
        for _ in 0..records {
            let len = read_u32(&mut r)?;
            if len > MAX_DOI_LEN {
                return Err(SnapshotError::Corrupt(format!("DOI length {len}")));
            }
            let mut buf = vec![0u8; len as usize];
            r.read_exact(&mut buf)?;
            let text = String::from_utf8(buf).map_err(|e| SnapshotError::Corrupt(e.to_string()))?;
            let doi = Doi::parse(&text).map_err(|e| SnapshotError::Corrupt(e.to_string()))?;
            let count = read_u64(&mut r)?;
            sum += count;
            if in_degree.insert(doi, count).is_some() {
                return Err(SnapshotError::Corrupt(format!("duplicate record {text}")));
            }
        }
        if sum != total_edges {
            return Err(SnapshotError::Corrupt(format!(
                "in-degrees sum to {sum}, header says {total_edges} edges"
            )));
        }
        Ok(CitationIndex::from_parts(in_degree, total_edges, total_entities))
    }
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CitationIndex {
        let doi = |s: &str| Doi::parse(s).unwrap();
        CitationIndex::from_parts(
            HashMap::from([(doi("10.1234/b"), 2), (doi("10.1234/a"), 5)]),
            7,
            9,
        )
    }

    #[test]
    fn round_trip_is_lossless() {
        let index = sample();
        let mut buf = Vec::new();
        index.write_snapshot(&mut buf).unwrap();
        assert_eq!(&buf[..8], SNAPSHOT_MAGIC);
        let back = CitationIndex::read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(back, index);
        let mut again = Vec::new();
        back.write_snapshot(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(
            CitationIndex::read_snapshot(&b"NOTANIDX\x01\0\0\0"[..]),
            Err(SnapshotError::BadMagic)
        ));
        let mut buf = Vec::new();
        sample().write_snapshot(&mut buf).unwrap();
        buf[8] = 9;
        assert!(matches!(
            CitationIndex::read_snapshot(buf.as_slice()),
            Err(SnapshotError::UnsupportedVersion(9))
        ));
        let mut buf = Vec::new();
        sample().write_snapshot(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(
            CitationIndex::read_snapshot(buf.as_slice()),
            Err(SnapshotError::Io(_))
        ));
    }
}

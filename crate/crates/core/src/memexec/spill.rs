//! Spill store: sealed, immutable record segments on secondary storage.
//!
//! Segment layout (little-endian): magic `SCISPL1\0`, u64 words-per-config,
//! u64 record count, then records as (u64 source_idx, W×u64 target words,
//! f64 element). The store keeps a directory (offset, length, record count,
//! checksum) per segment; read-back verifies the checksum so corruption is
//! caught rather than propagated into energies.

use super::ExecError;
use crate::conf::{Configuration, CONFIG_WORDS};
use crate::genkernel::{CoupledRecord, RECORD_BYTES};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

pub const SPILL_MAGIC: &[u8; 8] = b"SCISPL1\0";
pub const SEGMENT_HEADER_BYTES: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentId(pub usize);

#[derive(Debug, Clone)]
struct SegmentMeta {
    offset: u64,
    len: u64,
    record_count: u64,
    checksum: u64,
}

enum Backend {
    Memory(Vec<u8>),
    File { file: File, path: PathBuf, len: u64 },
}

pub struct SpillStore {
    backend: Backend,
    segments: Vec<SegmentMeta>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn encode_segment(records: &[CoupledRecord]) -> Vec<u8> {
    let mut out = Vec::with_capacity(SEGMENT_HEADER_BYTES + records.len() * RECORD_BYTES);
    out.extend_from_slice(SPILL_MAGIC);
    out.extend_from_slice(&(CONFIG_WORDS as u64).to_le_bytes());
    out.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for r in records {
        out.extend_from_slice(&r.source_idx.to_le_bytes());
        for w in r.target.words() {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.extend_from_slice(&r.element.to_le_bytes());
    }
    out
}

fn decode_segment(bytes: &[u8]) -> Result<Vec<CoupledRecord>, ExecError> {
    let bad = |msg: &str| ExecError::SpillCorrupt(msg.to_string());
    if bytes.len() < SEGMENT_HEADER_BYTES || &bytes[..8] != SPILL_MAGIC {
        return Err(bad("missing SCISPL1 magic"));
    }
    let u64_at = |off: usize| u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    let words = u64_at(8) as usize;
    if words != CONFIG_WORDS {
        return Err(bad("words-per-config mismatch"));
    }
    let count = u64_at(16) as usize;
    if bytes.len() != SEGMENT_HEADER_BYTES + count * RECORD_BYTES {
        return Err(bad("segment length does not match record count"));
    }
    let mut records = Vec::with_capacity(count);
    for k in 0..count {
        let off = SEGMENT_HEADER_BYTES + k * RECORD_BYTES;
        let mut ws = [0u64; CONFIG_WORDS];
        for (i, w) in ws.iter_mut().enumerate() {
            *w = u64_at(off + 8 + 8 * i);
        }
        records.push(CoupledRecord {
            source_idx: u64_at(off),
            target: Configuration::from_words(ws),
            element: f64::from_bits(u64_at(off + 8 + 8 * CONFIG_WORDS)),
        });
    }
    Ok(records)
}

impl SpillStore {
    /// Secondary arena in host memory.
    pub fn in_memory() -> Self {
        SpillStore { backend: Backend::Memory(Vec::new()), segments: Vec::new() }
    }

    /// File-backed store; writes one append-only file inside `dir`.
    pub fn in_dir(dir: &Path) -> Result<Self, ExecError> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("spill.bin");
        let file = OpenOptions::new()
            .create(true)
            .truncate(true)
            .read(true)
            .write(true)
            .open(&path)?;
        Ok(SpillStore { backend: Backend::File { file, path, len: 0 }, segments: Vec::new() })
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn segment_records(&self, id: SegmentId) -> u64 {
        self.segments[id.0].record_count
    }

    pub fn total_records(&self) -> u64 {
        self.segments.iter().map(|s| s.record_count).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.segments.iter().map(|s| s.len).sum()
    }

    pub fn path(&self) -> Option<&Path> {
        match &self.backend {
            Backend::Memory(_) => None,
            Backend::File { path, .. } => Some(path),
        }
    }

    /// Appends and seals one segment; sealed segments are immutable.
    pub fn seal_segment(&mut self, records: &[CoupledRecord]) -> Result<SegmentId, ExecError> {
        let bytes = encode_segment(records);
        let checksum = fnv1a(&bytes);
        let offset = match &mut self.backend {
            Backend::Memory(arena) => {
                let offset = arena.len() as u64;
                arena.extend_from_slice(&bytes);
                offset
            }
            Backend::File { file, len, .. } => {
                let offset = *len;
                file.write_all(&bytes)?;
                *len += bytes.len() as u64;
                offset
            }
        };
        self.segments.push(SegmentMeta {
            offset,
            len: bytes.len() as u64,
            record_count: records.len() as u64,
            checksum,
        });
        Ok(SegmentId(self.segments.len() - 1))
    }

    fn raw_segment(&self, meta: &SegmentMeta) -> Result<Vec<u8>, ExecError> {
        match &self.backend {
            Backend::Memory(arena) => {
                Ok(arena[meta.offset as usize..(meta.offset + meta.len) as usize].to_vec())
            }
            Backend::File { file, .. } => {
                let mut buf = vec![0u8; meta.len as usize];
                file.read_exact_at(&mut buf, meta.offset)?;
                Ok(buf)
            }
        }
    }

    /// Checksummed read-back; byte-identical to what was sealed.
    pub fn read_segment(&self, id: SegmentId) -> Result<Vec<CoupledRecord>, ExecError> {
        let meta = self
            .segments
            .get(id.0)
            .ok_or_else(|| ExecError::SpillCorrupt(format!("no segment {}", id.0)))?;
        let bytes = self.raw_segment(meta)?;
        if fnv1a(&bytes) != meta.checksum {
            return Err(ExecError::SpillCorrupt(format!("checksum mismatch in segment {}", id.0)));
        }
        decode_segment(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(n: u64) -> Vec<CoupledRecord> {
        (0..n)
            .map(|k| CoupledRecord {
                source_idx: k,
                target: Configuration::from_words([k * 3 + 1, k]),
                element: -0.25 * k as f64,
            })
            .collect()
    }

    #[test]
    fn memory_round_trip() {
        let mut store = SpillStore::in_memory();
        let a = store.seal_segment(&records(7)).unwrap();
        let b = store.seal_segment(&records(0)).unwrap();
        assert_eq!(store.read_segment(a).unwrap(), records(7));
        assert_eq!(store.read_segment(b).unwrap(), vec![]);
        assert_eq!(store.total_records(), 7);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = SpillStore::in_dir(dir.path()).unwrap();
        let ids: Vec<_> = (0..5).map(|k| store.seal_segment(&records(k * 11)).unwrap()).collect();
        for (k, id) in ids.iter().enumerate() {
            assert_eq!(store.read_segment(*id).unwrap(), records(k as u64 * 11));
        }
        assert_eq!(store.segment_count(), 5);
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = SpillStore::in_dir(dir.path()).unwrap();
        let id = store.seal_segment(&records(4)).unwrap();
        // Flip one payload byte behind the store's back.
        let path = store.path().unwrap().to_path_buf();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[SEGMENT_HEADER_BYTES + 3] ^= 0xff;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(store.read_segment(id), Err(ExecError::SpillCorrupt(_))));
    }

    #[test]
    fn bad_magic_rejected() {
        assert!(matches!(decode_segment(b"NOPE0000rest"), Err(ExecError::SpillCorrupt(_))));
    }

    #[test]
    fn header_and_record_layout_are_stable() {
        let mut store = SpillStore::in_memory();
        store.seal_segment(&records(1)).unwrap();
        let Backend::Memory(arena) = &store.backend else { unreachable!() };
        assert_eq!(&arena[..8], SPILL_MAGIC);
        assert_eq!(u64::from_le_bytes(arena[8..16].try_into().unwrap()), CONFIG_WORDS as u64);
        assert_eq!(u64::from_le_bytes(arena[16..24].try_into().unwrap()), 1);
        assert_eq!(arena.len(), SEGMENT_HEADER_BYTES + RECORD_BYTES);
    }
}

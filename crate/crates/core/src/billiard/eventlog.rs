//! Fixed-width binary event log.
//!
//! Every record is 40 bytes, little-endian:
//!
//! | offset | type | field |
//! |-------:|------|-------|
//! | 0  | f64 | event time |
//! | 8  | u32 | kind: 0 wall, 1 disk-disk, 2 cross-cell, 3 bath refresh |
//! | 12 | u32 | first participant (disk, or cell for a refresh) |
//! | 16 | u32 | second participant (wall piece index, second disk, or 0) |
//! | 20 | u32 | reserved, always 0 |
//! | 24 | f64 | post-event energy of the first participant |
//! | 32 | f64 | post-event energy of the second participant |

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use super::sim::{EventKind, ProcessedEvent};
use crate::scalar::Real;

pub const EVENT_RECORD_BYTES: usize = 40;

/// A decoded log record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub time: f64,
    pub kind: u32,
    pub a: u32,
    pub b: u32,
    pub e_a: f64,
    pub e_b: f64,
}

fn encode<S: Real>(ev: &ProcessedEvent<S>) -> [u8; EVENT_RECORD_BYTES] {
    let (kind, a, b) = match ev.kind {
        EventKind::Wall { disk, piece } => (0u32, disk, piece),
        EventKind::Disk { a, b } => (1, a, b),
        EventKind::CrossDisk { a, b } => (2, a, b),
        EventKind::BathRefresh { cell } => (3, cell, 0),
    };
    let mut buf = [0u8; EVENT_RECORD_BYTES];
    buf[0..8].copy_from_slice(&ev.time.to_f64_lossy().to_le_bytes());
    buf[8..12].copy_from_slice(&kind.to_le_bytes());
    buf[12..16].copy_from_slice(&(a as u32).to_le_bytes());
    buf[16..20].copy_from_slice(&(b as u32).to_le_bytes());
    buf[24..32].copy_from_slice(&ev.post[0].to_f64_lossy().to_le_bytes());
    buf[32..40].copy_from_slice(&ev.post[1].to_f64_lossy().to_le_bytes());
    buf
}

pub struct EventLogWriter<W: Write> {
    inner: W,
    records: u64,
}

impl<W: Write> EventLogWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner, records: 0 }
    }

    pub fn write<S: Real>(&mut self, ev: &ProcessedEvent<S>) -> io::Result<()> {
        self.inner.write_all(&encode(ev))?;
        self.records += 1;
        Ok(())
    }

    pub fn records(&self) -> u64 {
        self.records
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn read_event_log<R: Read>(mut reader: R) -> io::Result<Vec<LoggedEvent>> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() % EVENT_RECORD_BYTES != 0 {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "truncated event record"));
    }
    let f64_at = |c: &[u8], o: usize| f64::from_le_bytes(c[o..o + 8].try_into().expect("8 bytes"));
    let u32_at = |c: &[u8], o: usize| u32::from_le_bytes(c[o..o + 4].try_into().expect("4 bytes"));
    Ok(bytes
        .chunks_exact(EVENT_RECORD_BYTES)
        .map(|c| LoggedEvent {
            time: f64_at(c, 0),
            kind: u32_at(c, 8),
            a: u32_at(c, 12),
            b: u32_at(c, 16),
            e_a: f64_at(c, 24),
            e_b: f64_at(c, 32),
        })
        .collect())
}

//! PTAG binary time-tag files.
//!
//! Little-endian, fixed stride:
//!
//! ```text
//! header  16 bytes  "PTAG" | version u16 = 1 | resolution_ps u16 = 1 | record_count u64
//! record  16 bytes  timestamp_ps u64 | channel u8 | flags u8 | reserved [u8; 6]
//! ```
//!
//! Stream metadata (duration, live time, channel labels) lives in a JSON sidecar
//! next to the file, `<file>.json`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use narrowband_core::tags::{ChannelInfo, TimeTag, TimeTagStream};
use narrowband_core::Channel;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PTAG";
pub const VERSION: u16 = 1;
pub const RESOLUTION_PS: u16 = 1;
pub const HEADER_LEN: usize = 16;
pub const RECORD_LEN: usize = 16;

/// Tags per buffered read or write.
const CHUNK: usize = 1 << 16;

pub fn encode_header(record_count: u64) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[..4].copy_from_slice(MAGIC);
    h[4..6].copy_from_slice(&VERSION.to_le_bytes());
    h[6..8].copy_from_slice(&RESOLUTION_PS.to_le_bytes());
    h[8..].copy_from_slice(&record_count.to_le_bytes());
    h
}

#[inline]
pub fn encode_record(t: &TimeTag) -> [u8; RECORD_LEN] {
    let mut r = [0u8; RECORD_LEN];
    r[..8].copy_from_slice(&t.time_ps.to_le_bytes());
    r[8] = t.channel.0;
    r
}

#[inline]
pub fn decode_record(r: &[u8]) -> TimeTag {
    let mut ts = [0u8; 8];
    ts.copy_from_slice(&r[..8]);
    TimeTag::new(u64::from_le_bytes(ts), Channel(r[8]))
}

/// Parses a header, returning the record count.
pub fn decode_header(h: &[u8]) -> std::result::Result<u64, String> {
    if h.len() < HEADER_LEN {
        return Err("truncated header".into());
    }
    if &h[..4] != MAGIC {
        return Err("bad magic".into());
    }
    let version = u16::from_le_bytes([h[4], h[5]]);
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let res = u16::from_le_bytes([h[6], h[7]]);
    if res != RESOLUTION_PS {
        return Err(format!("unsupported resolution {res} ps"));
    }
    let mut n = [0u8; 8];
    n.copy_from_slice(&h[8..16]);
    Ok(u64::from_le_bytes(n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub id: u8,
    pub label: String,
    pub count: u64,
}

/// JSON sidecar of a PTAG file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub version: u16,
    pub resolution_ps: u16,
    pub record_count: u64,
    pub duration_s: f64,
    /// Exact duration; `duration_s` is informative when this is present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_ps: Option<u64>,
    pub live_time_s: f64,
    pub channels: Vec<ChannelSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Free-form producer metadata (scenario hash, run statistics).
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub producer: serde_json::Value,
}

impl Sidecar {
    pub fn for_stream(stream: &TimeTagStream) -> Self {
        let mut counts = [0u64; 256];
        for t in &stream.records {
            counts[t.channel.0 as usize] += 1;
        }
        Sidecar::from_header(stream, &counts)
    }

    /// Sidecar for a stream header with per-channel counts gathered elsewhere.
    pub fn from_header(header: &TimeTagStream, counts: &[u64; 256]) -> Self {
        Sidecar {
            format: "PTAG".into(),
            version: VERSION,
            resolution_ps: RESOLUTION_PS,
            record_count: counts.iter().sum(),
            duration_s: header.duration(),
            duration_ps: Some(header.duration_ps),
            live_time_s: header.live_time,
            channels: header
                .channels
                .iter()
                .map(|c| ChannelSummary {
                    id: c.id.0,
                    label: c.label.clone(),
                    count: counts[c.id.0 as usize],
                })
                .collect(),
            seed: None,
            producer: serde_json::Value::Null,
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Streaming PTAG writer; the record count is patched into the header on finish.
pub struct PtagWriter {
    path: PathBuf,
    out: BufWriter<File>,
    count: u64,
    buf: Vec<u8>,
}

impl PtagWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::with_capacity(1 << 20, f);
        out.write_all(&encode_header(0)).map_err(|e| Error::io(path, e))?;
        Ok(PtagWriter {
            path: path.into(),
            out,
            count: 0,
            buf: Vec::with_capacity(CHUNK * RECORD_LEN),
        })
    }

    pub fn write(&mut self, tags: &[TimeTag]) -> Result<()> {
        for chunk in tags.chunks(CHUNK) {
            self.buf.clear();
            for t in chunk {
                self.buf.extend_from_slice(&encode_record(t));
            }
            self.out.write_all(&self.buf).map_err(|e| Error::io(&self.path, e))?;
        }
        self.count += tags.len() as u64;
        Ok(())
    }

    pub fn finish(self) -> Result<u64> {
        let path = self.path;
        let mut f = self.out.into_inner().map_err(|e| Error::io(&path, e.into_error()))?;
        f.seek(SeekFrom::Start(0)).map_err(|e| Error::io(&path, e))?;
        f.write_all(&encode_header(self.count)).map_err(|e| Error::io(&path, e))?;
        f.sync_all().map_err(|e| Error::io(&path, e))?;
        Ok(self.count)
    }
}

/// Chunked PTAG reader.
pub struct PtagReader {
    path: PathBuf,
    input: BufReader<File>,
    remaining: u64,
    count: u64,
    buf: Vec<u8>,
}

impl PtagReader {
    pub fn open(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let len = f.metadata().map_err(|e| Error::io(path, e))?.len();
        let mut input = BufReader::with_capacity(1 << 20, f);
        let mut h = [0u8; HEADER_LEN];
        input.read_exact(&mut h).map_err(|_| Error::Format {
            path: path.into(),
            reason: "truncated header".into(),
        })?;
        let count = decode_header(&h).map_err(|reason| Error::Format {
            path: path.into(),
            reason,
        })?;
        let expected = HEADER_LEN as u64 + count * RECORD_LEN as u64;
        if len != expected {
            return Err(Error::Format {
                path: path.into(),
                reason: format!("{count} records need {expected} bytes, file has {len}"),
            });
        }
        Ok(PtagReader {
            path: path.into(),
            input,
            remaining: count,
            count,
            buf: vec![0; CHUNK * RECORD_LEN],
        })
    }

    pub fn record_count(&self) -> u64 {
        self.count
    }

    /// Reads up to one chunk into `out` (cleared first); false at end of file.
    pub fn next_chunk(&mut self, out: &mut Vec<TimeTag>) -> Result<bool> {
        out.clear();
        if self.remaining == 0 {
            return Ok(false);
        }
        let n = (self.remaining as usize).min(CHUNK);
        let bytes = &mut self.buf[..n * RECORD_LEN];
        self.input.read_exact(bytes).map_err(|e| Error::io(&self.path, e))?;
        out.extend(bytes.chunks_exact(RECORD_LEN).map(decode_record));
        self.remaining -= n as u64;
        Ok(true)
    }
}

pub fn read_sidecar(path: &Path) -> Result<Option<Sidecar>> {
    let p = sidecar_path(path);
    if !p.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    serde_json::from_str(&text).map(Some).map_err(|e| Error::Parse {
        path: p,
        message: e.to_string(),
    })
}

pub fn write_sidecar(path: &Path, sidecar: &Sidecar) -> Result<()> {
    let p = sidecar_path(path);
    let text = serde_json::to_string_pretty(sidecar)?;
    std::fs::write(&p, text + "\n").map_err(|e| Error::io(&p, e))
}

/// Header stream (no records) described by a sidecar, or inferred from the
/// records when there is none.
fn header_from(sidecar: Option<&Sidecar>, records: &[TimeTag]) -> TimeTagStream {
    match sidecar {
        Some(s) => {
            let mut h = TimeTagStream::empty(s.duration_s, &[]);
            if let Some(d) = s.duration_ps {
                h.duration_ps = d;
            }
            h.channels = s
                .channels
                .iter()
                .map(|c| ChannelInfo {
                    id: Channel(c.id),
                    label: c.label.clone(),
                })
                .collect();
            h.live_time = s.live_time_s;
            h
        }
        None => {
            let end_ps = records.last().map_or(0, |t| t.time_ps + 1);
            let mut h = TimeTagStream::empty(end_ps as f64 * 1e-12, &[]);
            let mut seen = [false; 256];
            for t in records {
                seen[t.channel.0 as usize] = true;
            }
            for (i, _) in seen.iter().enumerate().filter(|(_, s)| **s) {
                h.declare_channel(Channel(i as u8), &format!("ch{i}"));
            }
            h
        }
    }
}

/// Loads a complete stream and validates it.
pub fn read_stream(path: &Path) -> Result<TimeTagStream> {
    let sidecar = read_sidecar(path)?;
    let mut reader = PtagReader::open(path)?;
    let mut records = Vec::with_capacity(reader.record_count() as usize);
    let mut chunk = Vec::new();
    while reader.next_chunk(&mut chunk)? {
        records.extend_from_slice(&chunk);
    }
    let mut stream = header_from(sidecar.as_ref(), &records);
    stream.records = records;
    stream.validate()?;
    Ok(stream)
}

/// Writes a stream and its sidecar.
pub fn write_stream(path: &Path, stream: &TimeTagStream, seed: Option<u64>) -> Result<Sidecar> {
    let mut w = PtagWriter::create(path)?;
    w.write(&stream.records)?;
    w.finish()?;
    let mut s = Sidecar::for_stream(stream);
    s.seed = seed;
    write_sidecar(path, &s)?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let h = encode_header(0x0102);
        assert_eq!(&h[..4], b"PTAG");
        assert_eq!(&h[4..8], &[1, 0, 1, 0]);
        assert_eq!(&h[8..], &[2, 1, 0, 0, 0, 0, 0, 0]);
        assert_eq!(decode_header(&h), Ok(0x0102));
        let mut bad = h;
        bad[4] = 2;
        assert!(decode_header(&bad).is_err());
    }

    #[test]
    fn record_layout() {
        let t = TimeTag::new(0x0807_0605_0403_0201, Channel(9));
        let r = encode_record(&t);
        assert_eq!(r, [1, 2, 3, 4, 5, 6, 7, 8, 9, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(decode_record(&r), t);
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.ptag");
        let mut bytes = encode_header(2).to_vec();
        bytes.extend_from_slice(&encode_record(&TimeTag::new(5, Channel(0))));
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(read_stream(&p), Err(Error::Format { .. })));
    }
}

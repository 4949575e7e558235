//! Single-file row store.
//!
//! Layout: a 17-byte header (`SGOC`, version, next id, CRC-32 of the
//! preceding bytes) followed by records. Each record is `SGR1`, payload
//! length, payload CRC-32, payload. A damaged record is skipped by scanning
//! forward to the next marker, so one bad row never hides the others.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{CacheEntry, CacheError};

const MAGIC: &[u8; 4] = b"SGOC";
const VERSION: u8 = 1;
const HEADER_LEN: usize = 17;
const RECORD_MARKER: &[u8; 4] = b"SGR1";
const RECORD_HEAD: usize = 12;

pub(super) struct Loaded {
    pub rows: Vec<CacheEntry>,
    pub next_id: i64,
    /// Damaged byte ranges, in file order.
    pub corrupt: Vec<Vec<u8>>,
}

pub fn quarantine_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".quarantine");
    PathBuf::from(name)
}

fn put_field(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

fn encode_row(row: &CacheEntry) -> Vec<u8> {
    let mut payload = Vec::new();
    payload.extend_from_slice(&row.id.to_be_bytes());
    put_field(&mut payload, row.serial_number.as_bytes());
    put_field(&mut payload, row.cert_status.as_bytes());
    put_field(&mut payload, row.ocsp_url.as_bytes());
    put_field(&mut payload, row.next_update.as_bytes());
    put_field(&mut payload, &row.ocsp_response);
    put_field(&mut payload, &row.certificate);
    put_field(&mut payload, &row.issuer_certificate);

    let mut out = Vec::with_capacity(RECORD_HEAD + payload.len());
    out.extend_from_slice(RECORD_MARKER);
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&crc32fast::hash(&payload).to_be_bytes());
    out.extend_from_slice(&payload);
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.buf.len() < n {
            return None;
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Some(head)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_be_bytes(self.take(4)?.try_into().ok()?))
    }

    fn field(&mut self) -> Option<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn text(&mut self) -> Option<String> {
        String::from_utf8(self.field()?.to_vec()).ok()
    }
}

fn decode_row(payload: &[u8]) -> Option<CacheEntry> {
    let mut c = Cursor { buf: payload };
    let id = i64::from_be_bytes(c.take(8)?.try_into().ok()?);
    let row = CacheEntry {
        id,
        serial_number: c.text()?,
        cert_status: c.text()?,
        ocsp_url: c.text()?,
        next_update: c.text()?,
        ocsp_response: c.field()?.to_vec(),
        certificate: c.field()?.to_vec(),
        issuer_certificate: c.field()?.to_vec(),
    };
    c.buf.is_empty().then_some(row)
}

/// Parses a record at the start of `buf`, returning it and its length.
fn read_record(buf: &[u8]) -> Option<(CacheEntry, usize)> {
    if buf.len() < RECORD_HEAD || &buf[..4] != RECORD_MARKER {
        return None;
    }
    let len = u32::from_be_bytes(buf[4..8].try_into().ok()?) as usize;
    let crc = u32::from_be_bytes(buf[8..12].try_into().ok()?);
    let payload = buf.get(RECORD_HEAD..RECORD_HEAD.checked_add(len)?)?;
    if crc32fast::hash(payload) != crc {
        return None;
    }
    Some((decode_row(payload)?, RECORD_HEAD + len))
}

fn next_marker(buf: &[u8], from: usize) -> usize {
    buf.get(from..)
        .and_then(|rest| rest.windows(4).position(|w| w == RECORD_MARKER))
        .map(|p| from + p)
        .unwrap_or(buf.len())
}

fn header(next_id: i64) -> Vec<u8> {
    let mut h = Vec::with_capacity(HEADER_LEN);
    h.extend_from_slice(MAGIC);
    h.push(VERSION);
    h.extend_from_slice(&next_id.to_be_bytes());
    h.extend_from_slice(&crc32fast::hash(&h).to_be_bytes());
    h
}

pub(super) fn load(path: &Path) -> Result<Loaded, CacheError> {
    let buf = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Ok(Loaded {
                rows: Vec::new(),
                next_id: 1,
                corrupt: Vec::new(),
            })
        }
        Err(e) => return Err(CacheError::Io(format!("{}: {e}", path.display()))),
    };
    if buf.len() < HEADER_LEN
        || &buf[..4] != MAGIC
        || buf[4] != VERSION
        || crc32fast::hash(&buf[..13]).to_be_bytes() != buf[13..17]
    {
        return Err(CacheError::StoreCorrupt(format!(
            "{}: unreadable header",
            path.display()
        )));
    }
    let mut next_id = i64::from_be_bytes(buf[5..13].try_into().expect("8 bytes"));

    let mut rows = Vec::new();
    let mut corrupt = Vec::new();
    let mut pos = HEADER_LEN;
    let mut bad_start: Option<usize> = None;
    while pos < buf.len() {
        match read_record(&buf[pos..]) {
            Some((row, len)) => {
                if let Some(start) = bad_start.take() {
                    corrupt.push(buf[start..pos].to_vec());
                }
                next_id = next_id.max(row.id + 1);
                rows.push(row);
                pos += len;
            }
            None => {
                bad_start.get_or_insert(pos);
                pos = next_marker(&buf, pos + 1);
            }
        }
    }
    if let Some(start) = bad_start {
        corrupt.push(buf[start..].to_vec());
    }
    Ok(Loaded {
        rows,
        next_id,
        corrupt,
    })
}

/// Atomically replaces the store with `rows`.
pub(super) fn save<'a>(
    path: &Path,
    next_id: i64,
    rows: impl Iterator<Item = &'a CacheEntry>,
) -> Result<(), CacheError> {
    let io = |e: std::io::Error| CacheError::Io(format!("{}: {e}", path.display()));
    let mut buf = header(next_id);
    for row in rows {
        buf.extend_from_slice(&encode_row(row));
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(&buf).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub(super) fn append_quarantine(path: &Path, chunks: &[Vec<u8>]) -> Result<(), CacheError> {
    let qpath = quarantine_path(path);
    let io = |e: std::io::Error| CacheError::Io(format!("{}: {e}", qpath.display()));
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&qpath)
        .map_err(io)?;
    for chunk in chunks {
        f.write_all(&(chunk.len() as u32).to_be_bytes()).map_err(io)?;
        f.write_all(chunk).map_err(io)?;
    }
    f.sync_all().map_err(io)
}

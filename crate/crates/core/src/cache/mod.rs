//! Client-side staple cache.
//!
//! Fetches OCSP responses for certificates from the URL in their AIA
//! extension, keeps one verified response per serial number on disk and
//! refreshes responses that are within seven days of expiry.

mod store;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::Duration;

use crate::codec::time::{self, Timestamp};
use crate::codec::{
    compute_cert_id, decode_ocsp_response, encode_ocsp_request, load_certificate,
    verify_ocsp_signature, CertId, CertMeta, CodecError, HashAlg, OcspRequest, OcspResponse,
    ResponseStatus, SerialNumber, SingleResponse,
};
use crate::transport::{OcspTransport, TransportError};

pub use store::quarantine_path;

/// Rows whose response expires sooner than this are refetched.
pub const REFRESH_HORIZON: Duration = Duration::days(7);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CacheError {
    #[error("certificate has no OCSP URL")]
    NoOcspUrl,
    #[error("upstream unreachable: {0}")]
    UpstreamUnreachable(String),
    #[error("upstream answered {0}")]
    UpstreamError(ResponseStatus),
    #[error("upstream response rejected: {0}")]
    SignatureInvalid(CodecError),
    #[error("upstream response does not cover the requested certificate")]
    ResponseMismatch,
    #[error("upstream response carries no nextUpdate")]
    MissingNextUpdate,
    #[error("serial {0} is not cached")]
    NotCached(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("store: {0}")]
    Io(String),
    #[error("store corrupt: {0}")]
    StoreCorrupt(String),
}

/// One row of the `ocsp_responses` table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheEntry {
    pub id: i64,
    /// Decimal form of the certificate serial.
    pub serial_number: String,
    /// `GOOD`, `REVOKED` or `UNKNOWN`.
    pub cert_status: String,
    pub ocsp_url: String,
    /// `YYYY-MM-DD HH:MM:SS`, UTC.
    pub next_update: String,
    pub ocsp_response: Vec<u8>,
    pub certificate: Vec<u8>,
    pub issuer_certificate: Vec<u8>,
}

impl CacheEntry {
    pub fn next_update_time(&self) -> Result<Timestamp, CodecError> {
        time::parse_sql(&self.next_update)
    }
}

/// A stored response ready to be presented.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Staple {
    pub der: Vec<u8>,
    pub entry: CacheEntry,
    /// The response's nextUpdate has passed.
    pub stale: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MaintenanceReport {
    pub checked: usize,
    pub updated: Vec<i64>,
    pub skipped: Vec<i64>,
    pub failed: Vec<(i64, String)>,
}

impl MaintenanceReport {
    pub fn is_partition(&self) -> bool {
        self.checked == self.updated.len() + self.skipped.len() + self.failed.len()
    }
}

/// True when a response expiring at `next_update` must be refetched at `now`.
pub fn needs_refresh(next_update: Timestamp, now: Timestamp) -> bool {
    next_update - now < REFRESH_HORIZON
}

struct Table {
    rows: BTreeMap<i64, CacheEntry>,
    by_serial: HashMap<String, i64>,
    next_id: i64,
}

impl Table {
    fn insert(&mut self, row: CacheEntry) {
        self.next_id = self.next_id.max(row.id + 1);
        self.by_serial.insert(row.serial_number.clone(), row.id);
        self.rows.insert(row.id, row);
    }

    fn get_serial(&self, serial: &str) -> Option<&CacheEntry> {
        self.by_serial.get(serial).and_then(|id| self.rows.get(id))
    }
}

pub struct StapleCache {
    table: RwLock<Table>,
    writer: Mutex<()>,
    path: Option<PathBuf>,
    anchors: Vec<CertMeta>,
    quarantined: usize,
}

struct Fetched {
    response: OcspResponse,
    single: SingleResponse,
    next_update: Timestamp,
}

impl StapleCache {
    /// A cache that lives only in memory.
    pub fn in_memory(anchors: Vec<CertMeta>) -> Self {
        Self {
            table: RwLock::new(Table {
                rows: BTreeMap::new(),
                by_serial: HashMap::new(),
                next_id: 1,
            }),
            writer: Mutex::new(()),
            path: None,
            anchors,
            quarantined: 0,
        }
    }

    /// Opens (or creates) the store at `path`. Damaged records are moved to
    /// the `.quarantine` sidecar and the store is rewritten without them.
    pub fn recover(path: &Path, anchors: Vec<CertMeta>) -> Result<Self, CacheError> {
        let loaded = store::load(path)?;
        let mut cache = Self::in_memory(anchors);
        cache.path = Some(path.to_path_buf());
        cache.quarantined = loaded.corrupt.len();
        {
            let table = cache.table.get_mut().unwrap_or_else(|e| e.into_inner());
            table.next_id = loaded.next_id;
            for row in loaded.rows {
                if let Some(old) = table.by_serial.get(&row.serial_number).copied() {
                    table.rows.remove(&old);
                }
                table.insert(row);
            }
        }
        if !loaded.corrupt.is_empty() {
            tracing::warn!(
                records = loaded.corrupt.len(),
                sidecar = %quarantine_path(path).display(),
                "quarantined damaged cache records"
            );
            store::append_quarantine(path, &loaded.corrupt)?;
            cache.persist(&cache.read())?;
        }
        Ok(cache)
    }

    pub fn open(path: &Path, anchors: Vec<CertMeta>) -> Result<Self, CacheError> {
        Self::recover(path, anchors)
    }

    pub fn anchors(&self) -> &[CertMeta] {
        &self.anchors
    }

    /// Records quarantined when the store was opened.
    pub fn quarantined(&self) -> usize {
        self.quarantined
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Table> {
        self.table.read().unwrap_or_else(|e| e.into_inner())
    }

    fn persist(&self, table: &Table) -> Result<(), CacheError> {
        match &self.path {
            Some(p) => store::save(p, table.next_id, table.rows.values()),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.read().rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All rows in id order.
    pub fn entries(&self) -> Vec<CacheEntry> {
        self.read().rows.values().cloned().collect()
    }

    pub fn entry(&self, serial: &SerialNumber) -> Option<CacheEntry> {
        self.read().get_serial(&serial.to_decimal()).cloned()
    }

    fn fetch(
        &self,
        cert: &CertMeta,
        issuer_der: &[u8],
        url: &str,
        now: Timestamp,
        transport: &dyn OcspTransport,
    ) -> Result<Fetched, CacheError> {
        let cert_id: CertId = compute_cert_id(cert, issuer_der, HashAlg::Sha1)?;
        let body = encode_ocsp_request(&OcspRequest::single(cert_id.clone()))?;
        let reply = transport.post(url, &body).map_err(|e| match e {
            TransportError::Unreachable(m) => CacheError::UpstreamUnreachable(m),
            TransportError::HttpStatus(s) => CacheError::UpstreamUnreachable(format!("HTTP {s}")),
        })?;
        let response = decode_ocsp_response(&reply)?;
        if response.response_status != ResponseStatus::Successful {
            return Err(CacheError::UpstreamError(response.response_status));
        }
        let single = verify_ocsp_signature(&response, &self.anchors, now)
            .map_err(CacheError::SignatureInvalid)?
            .find(&cert_id)
            .cloned()
            .ok_or(CacheError::ResponseMismatch)?;
        let next_update = single.next_update.ok_or(CacheError::MissingNextUpdate)?;
        Ok(Fetched {
            response,
            single,
            next_update,
        })
    }

    /// Returns the row for this certificate, fetching and storing a verified
    /// response first if the serial is not cached yet.
    pub fn lookup_or_fetch(
        &self,
        cert_der: &[u8],
        issuer_der: &[u8],
        now: Timestamp,
        transport: &dyn OcspTransport,
    ) -> Result<CacheEntry, CacheError> {
        let cert = load_certificate(cert_der)?;
        let issuer = load_certificate(issuer_der)?;
        let serial = cert.serial_number.to_decimal();
        if let Some(row) = self.read().get_serial(&serial) {
            return Ok(row.clone());
        }
        let url = cert.aia_ocsp_url.clone().ok_or(CacheError::NoOcspUrl)?;
        let fetched = self.fetch(&cert, &issuer.raw_der, &url, now, transport)?;

        let _w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut table = self.table.write().unwrap_or_else(|e| e.into_inner());
        if let Some(row) = table.get_serial(&serial) {
            return Ok(row.clone());
        }
        let row = CacheEntry {
            id: table.next_id,
            serial_number: serial,
            cert_status: fetched.single.status.label().to_string(),
            ocsp_url: url,
            next_update: time::format_sql(fetched.next_update),
            ocsp_response: fetched.response.raw_der,
            certificate: cert.raw_der,
            issuer_certificate: issuer.raw_der,
        };
        table.insert(row.clone());
        if let Err(e) = self.persist(&table) {
            table.rows.remove(&row.id);
            table.by_serial.remove(&row.serial_number);
            return Err(e);
        }
        Ok(row)
    }

    /// The stored response bytes for `serial`, exactly as fetched.
    pub fn get_staple(&self, serial: &SerialNumber, now: Timestamp) -> Result<Staple, CacheError> {
        let decimal = serial.to_decimal();
        let entry = self
            .read()
            .get_serial(&decimal)
            .cloned()
            .ok_or(CacheError::NotCached(decimal))?;
        let stale = entry.next_update_time()? <= now;
        Ok(Staple {
            der: entry.ocsp_response.clone(),
            entry,
            stale,
        })
    }

    /// Refetches every row whose response expires within seven days of
    /// `now`. Failures are reported per row and keep the old row.
    pub fn maintain(
        &self,
        now: Timestamp,
        transport: &dyn OcspTransport,
    ) -> Result<MaintenanceReport, CacheError> {
        let _w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let rows = self.entries();
        let mut report = MaintenanceReport {
            checked: rows.len(),
            ..Default::default()
        };
        let mut replacements = Vec::new();
        for row in rows {
            let due = match row.next_update_time() {
                Ok(next) => needs_refresh(next, now),
                Err(_) => true,
            };
            if !due {
                tracing::debug!(id = row.id, "don't need update");
                report.skipped.push(row.id);
                continue;
            }
            tracing::debug!(id = row.id, "need update");
            match self.refetch(&row, now, transport) {
                Ok(new_row) => {
                    report.updated.push(row.id);
                    replacements.push(new_row);
                }
                Err(e) => report.failed.push((row.id, e.to_string())),
            }
        }
        if !replacements.is_empty() {
            let mut table = self.table.write().unwrap_or_else(|e| e.into_inner());
            for row in replacements {
                table.insert(row);
            }
            self.persist(&table)?;
        }
        Ok(report)
    }

    fn refetch(
        &self,
        row: &CacheEntry,
        now: Timestamp,
        transport: &dyn OcspTransport,
    ) -> Result<CacheEntry, CacheError> {
        let cert = load_certificate(&row.certificate)?;
        let fetched = self.fetch(&cert, &row.issuer_certificate, &row.ocsp_url, now, transport)?;
        Ok(CacheEntry {
            cert_status: fetched.single.status.label().to_string(),
            next_update: time::format_sql(fetched.next_update),
            ocsp_response: fetched.response.raw_der,
            ..row.clone()
        })
    }

    /// Human-readable dump of every row.
    pub fn export_table(&self) -> String {
        let table = self.read();
        let mut out = format!("ocsp_responses: {} rows\n", table.rows.len());
        for row in table.rows.values() {
            let _ = write!(
                out,
                "\nid: {}\nserial_number: {}\ncert_status: {}\nocsp_url: {}\nnext_update: {}\n\
                 ocsp_response: {}\ncertificate: {}\nissuer_certificate: {}\n",
                row.id,
                row.serial_number,
                row.cert_status,
                row.ocsp_url,
                row.next_update,
                hex(&row.ocsp_response),
                hex(&row.certificate),
                hex(&row.issuer_certificate),
            );
        }
        out
    }
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_day_rule_boundaries() {
        let now = time::from_unix(1_700_000_000);
        for d in [
            Duration::days(-1),
            Duration::hours(12),
            Duration::days(3),
            Duration::days(6) + Duration::hours(23),
            Duration::days(7) - Duration::seconds(1),
        ] {
            assert!(needs_refresh(now + d, now), "{d}");
        }
        for d in [Duration::days(7), Duration::days(7) + Duration::hours(1), Duration::days(30)] {
            assert!(!needs_refresh(now + d, now), "{d}");
        }
    }

    #[test]
    fn empty_export_is_header_only() {
        let cache = StapleCache::in_memory(Vec::new());
        assert_eq!(cache.export_table(), "ocsp_responses: 0 rows\n");
    }
}

//! OCSP responder backed by a CRL-derived blacklist.
//!
//! Any serial absent from the blacklist is answered GOOD. The blacklist is
//! rebuilt from the configured CRL source on a timer and swapped in
//! atomically, so a query always sees exactly one snapshot.

mod config;
mod http;

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use chrono::Duration;

use crate::clock::{Clock, SystemClock};
use crate::codec::ocsp::build_response;
use crate::codec::{
    decode_ocsp_request, encode_ocsp_error, parse_crl, pem, CertMeta, CertStatus, CodecError,
    CrlEncoding, CrlSnapshot, HashAlg, OcspRequest, OcspResponse, ResponderId, ResponseFields,
    ResponseStatus, RevocationReason, SerialNumber, SingleResponse, Timestamp,
};
use crate::transport::HttpTransport;

pub use config::{CrlSource, ResponderConfig, ResponderSettings, SharedCrl};
pub use http::{serve, ServiceHandle};

#[derive(Debug, thiserror::Error)]
pub enum ResponderError {
    #[error("CRL source unavailable: {0}")]
    SourceUnavailable(String),
    #[error("CRL rejected: {0}")]
    InvalidCrl(#[source] CodecError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("cannot bind {addr}: {source}")]
    BindFailure {
        addr: String,
        #[source]
        source: std::io::Error,
    },
}

/// Revoked serials from one CRL, keyed for constant-time lookup.
#[derive(Debug)]
pub struct BlacklistIndex {
    by_serial: HashMap<SerialNumber, (Timestamp, RevocationReason)>,
    pub source_crl_last_update: Timestamp,
    pub loaded_at: Timestamp,
    crl: CrlSnapshot,
}

impl BlacklistIndex {
    pub fn from_crl(crl: CrlSnapshot, loaded_at: Timestamp) -> Self {
        let by_serial = crl
            .entries
            .iter()
            .map(|e| (e.serial_number.clone(), (e.revocation_date, e.reason)))
            .collect();
        Self {
            by_serial,
            source_crl_last_update: crl.last_update,
            loaded_at,
            crl,
        }
    }

    pub fn lookup(&self, serial: &SerialNumber) -> Option<(Timestamp, RevocationReason)> {
        self.by_serial.get(serial).copied()
    }

    pub fn len(&self) -> usize {
        self.by_serial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_serial.is_empty()
    }

    pub fn crl(&self) -> &CrlSnapshot {
        &self.crl
    }
}

/// Pulls the CRL from the configured source, checks it was signed by the
/// issuer and indexes it.
pub fn refresh_blacklist(
    config: &ResponderConfig,
    now: Timestamp,
) -> Result<BlacklistIndex, ResponderError> {
    let bytes = match &config.crl_source {
        CrlSource::File(path) => std::fs::read(path)
            .map_err(|e| ResponderError::SourceUnavailable(format!("{}: {e}", path.display())))?,
        CrlSource::Url(url) => HttpTransport::default()
            .get(url)
            .map_err(|e| ResponderError::SourceUnavailable(format!("{url}: {e}")))?,
        CrlSource::Shared(shared) => shared
            .get()
            .ok_or_else(|| ResponderError::SourceUnavailable("no CRL published yet".into()))?,
    };
    let encoding = if pem::looks_like_pem(&bytes) {
        CrlEncoding::Pem
    } else {
        CrlEncoding::Der
    };
    let crl = parse_crl(&bytes, encoding).map_err(ResponderError::InvalidCrl)?;
    crl.verify_signature(&config.issuer_cert)
        .map_err(ResponderError::InvalidCrl)?;
    Ok(BlacklistIndex::from_crl(crl, now))
}

struct IssuerHashes {
    sha1: (Vec<u8>, Vec<u8>),
    sha256: (Vec<u8>, Vec<u8>),
}

impl IssuerHashes {
    fn new(issuer: &CertMeta) -> Self {
        let pair = |alg: HashAlg| {
            (
                alg.digest(issuer.subject_dn.as_der()),
                alg.digest(&issuer.public_key_bits),
            )
        };
        Self {
            sha1: pair(HashAlg::Sha1),
            sha256: pair(HashAlg::Sha256),
        }
    }

    fn matches(&self, alg: HashAlg, name_hash: &[u8], key_hash: &[u8]) -> bool {
        let (n, k) = match alg {
            HashAlg::Sha1 => &self.sha1,
            HashAlg::Sha256 => &self.sha256,
        };
        n == name_hash && k == key_hash
    }
}

fn responder_id(config: &ResponderConfig) -> ResponderId {
    let cert = config.signer_cert.as_ref().unwrap_or(&config.issuer_cert);
    ResponderId::ByName(cert.subject_dn.clone())
}

fn signer_certs(config: &ResponderConfig) -> Vec<Vec<u8>> {
    config
        .signer_cert
        .as_ref()
        .map(|c| vec![c.raw_der.clone()])
        .unwrap_or_default()
}

/// Builds and signs the answer to `req`: UNKNOWN for CertIDs naming another
/// issuer, REVOKED for blacklisted serials, GOOD otherwise.
pub fn answer_query(
    req: &OcspRequest,
    index: &BlacklistIndex,
    config: &ResponderConfig,
    now: Timestamp,
) -> Result<OcspResponse, CodecError> {
    answer_with(req, index, config, &IssuerHashes::new(&config.issuer_cert), now)
}

fn answer_with(
    req: &OcspRequest,
    index: &BlacklistIndex,
    config: &ResponderConfig,
    hashes: &IssuerHashes,
    now: Timestamp,
) -> Result<OcspResponse, CodecError> {
    let now = crate::codec::time::truncate(now);
    let next = now + config.response_validity;
    let single_responses = req
        .cert_ids
        .iter()
        .map(|id| {
            let status = if !hashes.matches(id.hash_alg, &id.issuer_name_hash, &id.issuer_key_hash)
            {
                CertStatus::Unknown
            } else {
                match index.lookup(&id.serial_number) {
                    Some((revocation_time, reason)) => CertStatus::Revoked {
                        revocation_time,
                        reason,
                    },
                    None => CertStatus::Good,
                }
            };
            SingleResponse {
                cert_id: id.clone(),
                status,
                this_update: now,
                next_update: Some(next),
            }
        })
        .collect();
    let fields = ResponseFields {
        responder_id: responder_id(config),
        produced_at: now,
        single_responses,
        nonce_echo: req.nonce.clone(),
    };
    build_response(&fields, config.signer.as_ref(), &signer_certs(config))
}

/// A running responder: configuration, the live blacklist and a clock.
pub struct Responder {
    config: ResponderConfig,
    hashes: IssuerHashes,
    index: RwLock<Option<Arc<BlacklistIndex>>>,
    clock: Arc<dyn Clock>,
}

impl Responder {
    pub fn new(config: ResponderConfig) -> Self {
        Self::with_clock(config, Arc::new(SystemClock))
    }

    pub fn with_clock(config: ResponderConfig, clock: Arc<dyn Clock>) -> Self {
        Self {
            hashes: IssuerHashes::new(&config.issuer_cert),
            config,
            index: RwLock::new(None),
            clock,
        }
    }

    pub fn config(&self) -> &ResponderConfig {
        &self.config
    }

    /// Rebuilds the blacklist. On failure the previous snapshot stays live.
    pub fn refresh(&self) -> Result<Arc<BlacklistIndex>, ResponderError> {
        let index = Arc::new(refresh_blacklist(&self.config, self.clock.now())?);
        *self.index.write().unwrap_or_else(|e| e.into_inner()) = Some(index.clone());
        tracing::info!(
            revoked = index.len(),
            last_update = %index.source_crl_last_update,
            "blacklist refreshed"
        );
        Ok(index)
    }

    pub fn index(&self) -> Option<Arc<BlacklistIndex>> {
        self.index.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// DER of the CRL behind the live blacklist.
    pub fn current_crl(&self) -> Option<Vec<u8>> {
        self.index().map(|i| i.crl.raw.clone())
    }

    /// Answers one DER request. Never fails: problems become error statuses.
    pub fn respond(&self, body: &[u8]) -> Vec<u8> {
        let req = match decode_ocsp_request(body) {
            Ok(r) => r,
            Err(e) => {
                tracing::debug!(error = %e, "malformed request");
                return encode_ocsp_error(ResponseStatus::MalformedRequest);
            }
        };
        let Some(index) = self.index() else {
            return encode_ocsp_error(ResponseStatus::TryLater);
        };
        match answer_with(&req, &index, &self.config, &self.hashes, self.clock.now()) {
            Ok(resp) => resp.raw_der,
            Err(e) => {
                tracing::error!(error = %e, "failed to build response");
                encode_ocsp_error(ResponseStatus::InternalError)
            }
        }
    }
}

pub const DEFAULT_RESPONSE_VALIDITY: Duration = Duration::days(7);

/// In-process transport: the URL is ignored and the request answered directly.
impl crate::transport::OcspTransport for Responder {
    fn post(&self, _url: &str, body: &[u8]) -> Result<Vec<u8>, crate::transport::TransportError> {
        Ok(self.respond(body))
    }
}

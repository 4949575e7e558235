//! Deterministic meter-to-head-end handshake simulation.
//!
//! A client (meter) presents its certificate, the issuer chain and, in
//! stapled mode, a cached OCSP response. The server either checks the staple
//! locally or, in direct mode, queries the responder itself.

mod script;
mod world;

use std::fmt;

use chrono::Duration;

use crate::cache::{CacheError, StapleCache};
use crate::codec::time::Timestamp;
use crate::codec::{
    compute_cert_id, decode_ocsp_response, encode_ocsp_request, load_certificate,
    verify_ocsp_signature, CertMeta, CertStatus, CodecError, OcspRequest, OcspResponse,
    SingleResponse,
};
use crate::transport::OcspTransport;

pub use script::{
    parse_event, parse_fault, parse_script, run_script, Command, Event, Script, ScriptReport,
};
pub use world::{
    modeled_latency, replay_attack_scenario, run_scenario, ReplayConfig, ScenarioConfig,
    ScenarioStats, SimError, World, SIM_EPOCH, SIM_OCSP_URL,
};

/// Tolerated clock difference on validity-window checks.
pub const CLOCK_SKEW: Duration = Duration::seconds(300);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Stapled,
    Direct,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "stapled" => Ok(Self::Stapled),
            "direct" => Ok(Self::Direct),
            other => Err(format!("unknown mode {other:?} (stapled|direct)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Stapled => "stapled",
            Self::Direct => "direct",
        })
    }
}

/// What a client sends: its certificate, the chain up to a self-signed root
/// and, when stapling, the OCSP response.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StapleBundle {
    pub client_cert: Vec<u8>,
    pub issuer_chain: Vec<Vec<u8>>,
    pub stapled_response: Option<Vec<u8>>,
}

fn put(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

fn take<'a>(rest: &mut &'a [u8], n: usize) -> Option<&'a [u8]> {
    let head = rest.get(..n)?;
    *rest = &rest[n..];
    Some(head)
}

fn take_field<'a>(rest: &mut &'a [u8]) -> Option<&'a [u8]> {
    let n = u32::from_be_bytes(take(rest, 4)?.try_into().ok()?) as usize;
    take(rest, n)
}

impl StapleBundle {
    /// Handshake message: certificate, chain count and chain entries, then
    /// the staple (zero length when absent), each length-prefixed.
    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put(&mut out, &self.client_cert);
        out.extend_from_slice(&(self.issuer_chain.len() as u32).to_be_bytes());
        for c in &self.issuer_chain {
            put(&mut out, c);
        }
        put(&mut out, self.stapled_response.as_deref().unwrap_or(&[]));
        out
    }

    pub fn from_wire(bytes: &[u8]) -> Option<Self> {
        let mut rest = bytes;
        let client_cert = take_field(&mut rest)?.to_vec();
        let count = u32::from_be_bytes(take(&mut rest, 4)?.try_into().ok()?) as usize;
        let mut issuer_chain = Vec::new();
        for _ in 0..count {
            issuer_chain.push(take_field(&mut rest)?.to_vec());
        }
        let staple = take_field(&mut rest)?;
        if !rest.is_empty() {
            return None;
        }
        Some(Self {
            client_cert,
            issuer_chain,
            stapled_response: (!staple.is_empty()).then(|| staple.to_vec()),
        })
    }

    pub fn bytes_on_wire(&self) -> u64 {
        self.to_wire().len() as u64
    }
}

/// Roots the server accepts.
#[derive(Clone, Debug, Default)]
pub struct TrustStore {
    roots: Vec<CertMeta>,
}

impl TrustStore {
    pub fn new(roots: Vec<CertMeta>) -> Self {
        Self { roots }
    }

    pub fn roots(&self) -> &[CertMeta] {
        &self.roots
    }

    pub fn contains(&self, cert: &CertMeta) -> bool {
        self.roots.iter().any(|r| r.raw_der == cert.raw_der)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RejectReason {
    MissingStaple,
    RevokedStatus,
    /// UNKNOWN status; counted with [`RejectReason::RevokedStatus`].
    StatusNotGood,
    StaleResponse,
    SignatureInvalid,
    CertIdMismatch,
    UntrustedSigner,
    ChainInvalid,
    /// Direct mode only: the server could not reach the responder.
    UpstreamUnreachable,
}

impl RejectReason {
    /// The reason reported in aggregate statistics.
    pub fn class(self) -> Self {
        match self {
            Self::StatusNotGood => Self::RevokedStatus,
            other => other,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::MissingStaple => "MISSING_STAPLE",
            Self::RevokedStatus => "REVOKED_STATUS",
            Self::StatusNotGood => "STATUS_NOT_GOOD",
            Self::StaleResponse => "STALE_RESPONSE",
            Self::SignatureInvalid => "SIGNATURE_INVALID",
            Self::CertIdMismatch => "CERTID_MISMATCH",
            Self::UntrustedSigner => "UNTRUSTED_SIGNER",
            Self::ChainInvalid => "CHAIN_INVALID",
            Self::UpstreamUnreachable => "UPSTREAM_UNREACHABLE",
        }
    }

    pub const ALL: [RejectReason; 9] = [
        Self::MissingStaple,
        Self::RevokedStatus,
        Self::StatusNotGood,
        Self::StaleResponse,
        Self::SignatureInvalid,
        Self::CertIdMismatch,
        Self::UntrustedSigner,
        Self::ChainInvalid,
        Self::UpstreamUnreachable,
    ];
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for RejectReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_uppercase();
        Self::ALL
            .into_iter()
            .find(|r| r.label() == s)
            .ok_or_else(|| format!("unknown reject reason {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Accept => f.write_str("ACCEPT"),
            Self::Reject(r) => write!(f, "REJECT({r})"),
        }
    }
}

impl std::str::FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("accept") {
            return Ok(Self::Accept);
        }
        let inner = s
            .strip_prefix("REJECT(")
            .or_else(|| s.strip_prefix("reject("))
            .and_then(|r| r.strip_suffix(')'))
            .unwrap_or(s);
        inner.parse().map(Self::Reject)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HandshakeOutcome {
    pub verdict: Verdict,
    pub server_ocsp_queries: u32,
    pub bytes_on_wire: u64,
}

/// Builds the client's handshake message from its cached staple, fetching
/// one through `upstream` if the cache has none yet.
pub fn client_prepare_bundle(
    cert_der: &[u8],
    issuer_chain: &[Vec<u8>],
    cache: &StapleCache,
    now: Timestamp,
    upstream: &dyn OcspTransport,
) -> Result<StapleBundle, CacheError> {
    let issuer = issuer_chain
        .first()
        .ok_or(CacheError::Codec(CodecError::IssuerMismatch))?;
    let entry = cache.lookup_or_fetch(cert_der, issuer, now, upstream)?;
    Ok(StapleBundle {
        client_cert: cert_der.to_vec(),
        issuer_chain: issuer_chain.to_vec(),
        stapled_response: Some(entry.ocsp_response),
    })
}

/// Check (a): the chain links the client certificate to a trusted root.
fn check_chain(
    client: &[u8],
    chain: &[Vec<u8>],
    trust: &TrustStore,
    now: Timestamp,
) -> Result<(CertMeta, CertMeta), RejectReason> {
    let bad = |_| RejectReason::ChainInvalid;
    let leaf = load_certificate(client).map_err(bad)?;
    let certs = chain
        .iter()
        .map(|c| load_certificate(c))
        .collect::<Result<Vec<_>, _>>()
        .map_err(bad)?;
    let root = certs.last().ok_or(RejectReason::ChainInvalid)?;
    if !root.is_self_signed() || !trust.contains(root) {
        return Err(RejectReason::ChainInvalid);
    }
    let mut child = &leaf;
    for parent in &certs {
        child.verify_issued_by(parent).map_err(bad)?;
        if !child.is_valid_at(now) {
            return Err(RejectReason::ChainInvalid);
        }
        child = parent;
    }
    if !root.is_valid_at(now) {
        return Err(RejectReason::ChainInvalid);
    }
    Ok((leaf, certs[0].clone()))
}

fn signature_reason(e: &CodecError) -> RejectReason {
    match e {
        CodecError::UntrustedSigner | CodecError::SignerCertExpired(_) => {
            RejectReason::UntrustedSigner
        }
        CodecError::NotSuccessful(_) => RejectReason::MissingStaple,
        _ => RejectReason::SignatureInvalid,
    }
}

/// Checks (b) through (e) on a response for `leaf`.
fn check_response(
    response: &OcspResponse,
    leaf: &CertMeta,
    issuer: &CertMeta,
    trust: &TrustStore,
    now: Timestamp,
) -> Result<(), RejectReason> {
    let verified =
        verify_ocsp_signature(response, trust.roots(), now).map_err(|e| signature_reason(&e))?;
    let single: &SingleResponse = verified
        .single_responses()
        .iter()
        .find(|s| {
            compute_cert_id(leaf, &issuer.raw_der, s.cert_id.hash_alg)
                .is_ok_and(|id| id == s.cert_id)
        })
        .ok_or(RejectReason::CertIdMismatch)?;
    match single.status {
        CertStatus::Good => {}
        CertStatus::Revoked { .. } => return Err(RejectReason::RevokedStatus),
        CertStatus::Unknown => return Err(RejectReason::StatusNotGood),
    }
    let next = single.next_update.ok_or(RejectReason::StaleResponse)?;
    if single.this_update - CLOCK_SKEW > now || now > next + CLOCK_SKEW {
        return Err(RejectReason::StaleResponse);
    }
    Ok(())
}

fn verdict(r: Result<(), RejectReason>) -> Verdict {
    match r {
        Ok(()) => Verdict::Accept,
        Err(reason) => Verdict::Reject(reason),
    }
}

/// Server side of a stapled handshake. Never contacts a responder.
pub fn server_verify_bundle(
    bundle: &StapleBundle,
    trust: &TrustStore,
    now: Timestamp,
) -> HandshakeOutcome {
    let result = (|| {
        let (leaf, issuer) = check_chain(&bundle.client_cert, &bundle.issuer_chain, trust, now)?;
        let staple = bundle
            .stapled_response
            .as_deref()
            .ok_or(RejectReason::MissingStaple)?;
        let response = decode_ocsp_response(staple).map_err(|_| RejectReason::SignatureInvalid)?;
        check_response(&response, &leaf, &issuer, trust, now)
    })();
    HandshakeOutcome {
        verdict: verdict(result),
        server_ocsp_queries: 0,
        bytes_on_wire: bundle.bytes_on_wire(),
    }
}

/// Server side of a direct handshake: exactly one OCSP query to `url`.
pub fn server_verify_direct(
    cert_der: &[u8],
    issuer_chain: &[Vec<u8>],
    url: &str,
    upstream: &dyn OcspTransport,
    trust: &TrustStore,
    now: Timestamp,
) -> HandshakeOutcome {
    let bundle = StapleBundle {
        client_cert: cert_der.to_vec(),
        issuer_chain: issuer_chain.to_vec(),
        stapled_response: None,
    };
    let mut bytes = bundle.bytes_on_wire();
    let result = (|| {
        let (leaf, issuer) = check_chain(cert_der, issuer_chain, trust, now)?;
        let cert_id = compute_cert_id(&leaf, &issuer.raw_der, crate::codec::HashAlg::Sha1)
            .map_err(|_| RejectReason::ChainInvalid)?;
        let request = encode_ocsp_request(&OcspRequest::single(cert_id))
            .map_err(|_| RejectReason::ChainInvalid)?;
        bytes += request.len() as u64;
        let reply = upstream
            .post(url, &request)
            .map_err(|_| RejectReason::UpstreamUnreachable)?;
        bytes += reply.len() as u64;
        let response = decode_ocsp_response(&reply).map_err(|_| RejectReason::SignatureInvalid)?;
        check_response(&response, &leaf, &issuer, trust, now)
    })();
    HandshakeOutcome {
        verdict: verdict(result),
        server_ocsp_queries: 1,
        bytes_on_wire: bytes,
    }
}

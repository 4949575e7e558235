//! OCSP requests and responses (RFC 6960).

use std::fmt;
use std::ops::RangeInclusive;

use super::crypto::{verify_signature, Signer};
use super::time::{self, Timestamp};
use super::{
    encode_extension, parse_certificate, parse_extensions, CertId, CertMeta, CodecError,
    DistinguishedName, HashAlg, RevocationReason, SignatureAlgorithm,
};
use crate::der::{self, oid, tag, Reader};

/// Permitted nonce lengths in bytes.
pub const NONCE_LEN: RangeInclusive<usize> = 8..=32;

fn check_nonce(nonce: &Option<Vec<u8>>) -> Result<(), CodecError> {
    match nonce {
        Some(n) if !NONCE_LEN.contains(&n.len()) => Err(CodecError::InvalidNonce(n.len())),
        _ => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OcspRequest {
    pub cert_ids: Vec<CertId>,
    pub nonce: Option<Vec<u8>>,
}

impl OcspRequest {
    pub fn new(cert_ids: Vec<CertId>, nonce: Option<Vec<u8>>) -> Result<Self, CodecError> {
        if cert_ids.is_empty() {
            return Err(CodecError::EmptyRequest);
        }
        check_nonce(&nonce)?;
        Ok(Self { cert_ids, nonce })
    }

    pub fn single(cert_id: CertId) -> Self {
        Self {
            cert_ids: vec![cert_id],
            nonce: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ResponseStatus {
    Successful,
    MalformedRequest,
    InternalError,
    TryLater,
    SigRequired,
    Unauthorized,
}

impl ResponseStatus {
    pub fn code(self) -> u8 {
        match self {
            Self::Successful => 0,
            Self::MalformedRequest => 1,
            Self::InternalError => 2,
            Self::TryLater => 3,
            Self::SigRequired => 5,
            Self::Unauthorized => 6,
        }
    }

    fn from_code(code: u64) -> Result<Self, CodecError> {
        Ok(match code {
            0 => Self::Successful,
            1 => Self::MalformedRequest,
            2 => Self::InternalError,
            3 => Self::TryLater,
            5 => Self::SigRequired,
            6 => Self::Unauthorized,
            other => return Err(der::malformed(format!("unknown response status {other}"))),
        })
    }
}

impl fmt::Display for ResponseStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Successful => "successful",
            Self::MalformedRequest => "malformedRequest",
            Self::InternalError => "internalError",
            Self::TryLater => "tryLater",
            Self::SigRequired => "sigRequired",
            Self::Unauthorized => "unauthorized",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CertStatus {
    Good,
    Revoked {
        revocation_time: Timestamp,
        reason: RevocationReason,
    },
    Unknown,
}

impl CertStatus {
    /// `GOOD`, `REVOKED` or `UNKNOWN`.
    pub fn label(&self) -> &'static str {
        match self {
            Self::Good => "GOOD",
            Self::Revoked { .. } => "REVOKED",
            Self::Unknown => "UNKNOWN",
        }
    }

    fn encode(&self) -> Vec<u8> {
        match self {
            Self::Good => vec![tag::implicit(0), 0],
            Self::Revoked {
                revocation_time,
                reason,
            } => {
                let reason = der::constructed(tag::explicit(0), &[&der::enumerated(reason.code())]);
                der::constructed(
                    tag::explicit(1),
                    &[&time::encode_generalized(*revocation_time), &reason],
                )
            }
            Self::Unknown => vec![tag::implicit(2), 0],
        }
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let tlv = r.read_any()?;
        match tlv.tag {
            t if t == tag::implicit(0) && tlv.value.is_empty() => Ok(Self::Good),
            t if t == tag::implicit(2) && tlv.value.is_empty() => Ok(Self::Unknown),
            t if t == tag::explicit(1) => {
                let mut ri = tlv.reader();
                let revocation_time = time::decode(&ri.read(tag::GENERALIZED_TIME)?)?;
                let reason = match ri.read_optional(tag::explicit(0))? {
                    Some(wrapped) => {
                        let mut wr = wrapped.reader();
                        let code = wr.read_enumerated()?;
                        wr.finish()?;
                        RevocationReason::from_code(code)?
                    }
                    None => RevocationReason::Unspecified,
                };
                ri.finish()?;
                Ok(Self::Revoked {
                    revocation_time,
                    reason,
                })
            }
            other => Err(der::malformed(format!("bad CertStatus tag 0x{other:02x}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SingleResponse {
    pub cert_id: CertId,
    pub status: CertStatus,
    pub this_update: Timestamp,
    pub next_update: Option<Timestamp>,
}

impl SingleResponse {
    fn encode(&self) -> Vec<u8> {
        let id = self.cert_id.encode();
        let status = self.status.encode();
        let this = time::encode_generalized(self.this_update);
        match self.next_update {
            Some(next) => {
                let next = der::constructed(tag::explicit(0), &[&time::encode_generalized(next)]);
                der::sequence(&[&id, &status, &this, &next])
            }
            None => der::sequence(&[&id, &status, &this]),
        }
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let mut s = r.read_sequence()?;
        let cert_id = CertId::decode(&mut s)?;
        let status = CertStatus::decode(&mut s)?;
        let this_update = time::decode(&s.read(tag::GENERALIZED_TIME)?)?;
        let next_update = match s.read_optional(tag::explicit(0))? {
            Some(wrapped) => {
                let mut wr = wrapped.reader();
                let t = time::decode(&wr.read(tag::GENERALIZED_TIME)?)?;
                wr.finish()?;
                Some(t)
            }
            None => None,
        };
        s.read_optional(tag::explicit(1))?;
        s.finish()?;
        if let Some(next) = next_update {
            if this_update >= next {
                return Err(CodecError::InvalidField(
                    "thisUpdate must precede nextUpdate".into(),
                ));
            }
        }
        Ok(Self {
            cert_id,
            status,
            this_update,
            next_update,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ResponderId {
    ByName(DistinguishedName),
    /// SHA-1 of the responder's public key bits.
    ByKey(Vec<u8>),
}

impl ResponderId {
    pub fn matches(&self, cert: &CertMeta) -> bool {
        match self {
            Self::ByName(name) => *name == cert.subject_dn,
            Self::ByKey(hash) => *hash == HashAlg::Sha1.digest(&cert.public_key_bits),
        }
    }

    fn encode(&self) -> Vec<u8> {
        match self {
            Self::ByName(name) => der::constructed(tag::explicit(1), &[name.as_der()]),
            Self::ByKey(hash) => der::constructed(tag::explicit(2), &[&der::octet_string(hash)]),
        }
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let tlv = r.read_any()?;
        let mut inner = tlv.reader();
        let id = match tlv.tag {
            t if t == tag::explicit(1) => {
                Self::ByName(DistinguishedName::from_der(inner.read(tag::SEQUENCE)?.raw)?)
            }
            t if t == tag::explicit(2) => Self::ByKey(inner.read_octet_string()?.to_vec()),
            other => return Err(der::malformed(format!("bad ResponderID tag 0x{other:02x}"))),
        };
        inner.finish()?;
        Ok(id)
    }
}

/// The to-be-signed content of a basic response.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResponseFields {
    pub responder_id: ResponderId,
    pub produced_at: Timestamp,
    pub single_responses: Vec<SingleResponse>,
    pub nonce_echo: Option<Vec<u8>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasicResponse {
    pub responder_id: ResponderId,
    pub produced_at: Timestamp,
    pub single_responses: Vec<SingleResponse>,
    pub nonce_echo: Option<Vec<u8>>,
    pub signature_alg: SignatureAlgorithm,
    pub signature: Vec<u8>,
    /// DER certificates carried alongside the signature.
    pub signer_certs: Vec<Vec<u8>>,
    pub tbs_der: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OcspResponse {
    pub response_status: ResponseStatus,
    /// Present exactly when the status is successful.
    pub basic: Option<BasicResponse>,
    pub raw_der: Vec<u8>,
}

impl OcspResponse {
    pub fn single_responses(&self) -> &[SingleResponse] {
        self.basic
            .as_ref()
            .map(|b| b.single_responses.as_slice())
            .unwrap_or(&[])
    }

    pub fn produced_at(&self) -> Option<Timestamp> {
        self.basic.as_ref().map(|b| b.produced_at)
    }

    pub fn find(&self, id: &CertId) -> Option<&SingleResponse> {
        self.single_responses().iter().find(|s| s.cert_id == *id)
    }
}

fn nonce_extensions(nonce: &[u8]) -> Vec<u8> {
    let ext = encode_extension(oid::OCSP_NONCE, false, &der::octet_string(nonce));
    der::sequence(&[&ext])
}

/// Nonce value from an extension body; the inner OCTET STRING wrapper is
/// optional on input.
fn read_nonce(ext_seq_body: &[u8]) -> Result<Option<Vec<u8>>, CodecError> {
    for ext in parse_extensions(ext_seq_body)? {
        if ext.oid == oid::OCSP_NONCE {
            let mut r = Reader::new(ext.value);
            let nonce = match r.read_optional(tag::OCTET_STRING)? {
                Some(inner) if r.is_empty() => inner.value.to_vec(),
                _ => ext.value.to_vec(),
            };
            return Ok(Some(nonce));
        }
    }
    Ok(None)
}

pub fn encode_ocsp_request(req: &OcspRequest) -> Result<Vec<u8>, CodecError> {
    if req.cert_ids.is_empty() {
        return Err(CodecError::EmptyRequest);
    }
    check_nonce(&req.nonce)?;
    let singles: Vec<Vec<u8>> = req
        .cert_ids
        .iter()
        .map(|id| der::sequence(&[&id.encode()]))
        .collect();
    let parts: Vec<&[u8]> = singles.iter().map(Vec::as_slice).collect();
    let list = der::sequence(&parts);
    let tbs = match &req.nonce {
        Some(n) => {
            let exts = der::constructed(tag::explicit(2), &[&nonce_extensions(n)]);
            der::sequence(&[&list, &exts])
        }
        None => der::sequence(&[&list]),
    };
    Ok(der::sequence(&[&tbs]))
}

pub fn decode_ocsp_request(bytes: &[u8]) -> Result<OcspRequest, CodecError> {
    let mut outer = Reader::new(bytes);
    let mut req = outer.read_sequence()?;
    outer.finish()?;
    let mut tbs = req.read_sequence()?;
    // optionalSignature is accepted but not checked.
    req.read_optional(tag::explicit(0))?;
    req.finish()?;

    if let Some(v) = tbs.read_optional(tag::explicit(0))? {
        let mut vr = v.reader();
        if vr.read_small_unsigned()? != 0 {
            return Err(der::malformed("unsupported OCSP request version"));
        }
        vr.finish()?;
    }
    tbs.read_optional(tag::explicit(1))?;
    let mut list = tbs.read_sequence()?;
    let mut cert_ids = Vec::new();
    while !list.is_empty() {
        let mut single = list.read_sequence()?;
        cert_ids.push(CertId::decode(&mut single)?);
        single.read_optional(tag::explicit(0))?;
        single.finish()?;
    }
    let mut nonce = None;
    if let Some(exts) = tbs.read_optional(tag::explicit(2))? {
        let mut er = exts.reader();
        nonce = read_nonce(er.read(tag::SEQUENCE)?.value)?;
        er.finish()?;
    }
    tbs.finish()?;
    OcspRequest::new(cert_ids, nonce)
}

/// Encodes the tbsResponseData, signs it and wraps it as a successful response.
pub fn encode_ocsp_response(
    fields: &ResponseFields,
    signer: &dyn Signer,
    signer_certs: &[Vec<u8>],
) -> Result<Vec<u8>, CodecError> {
    Ok(build_response(fields, signer, signer_certs)?.raw_der)
}

/// Same as [`encode_ocsp_response`] but also returns the structured form,
/// saving a decode pass.
pub(crate) fn build_response(
    fields: &ResponseFields,
    signer: &dyn Signer,
    signer_certs: &[Vec<u8>],
) -> Result<OcspResponse, CodecError> {
    if fields.single_responses.is_empty() {
        return Err(CodecError::InvalidField(
            "a successful response needs at least one SingleResponse".into(),
        ));
    }
    check_nonce(&fields.nonce_echo)?;
    for s in &fields.single_responses {
        if matches!(s.next_update, Some(n) if n <= s.this_update) {
            return Err(CodecError::InvalidField(
                "thisUpdate must precede nextUpdate".into(),
            ));
        }
    }
    let mut singles = Vec::new();
    for s in &fields.single_responses {
        singles.extend_from_slice(&s.encode());
    }
    let responses = der::encode(tag::SEQUENCE, &singles);
    drop(singles);
    let responder = fields.responder_id.encode();
    let produced = time::encode_generalized(fields.produced_at);
    let tbs = match &fields.nonce_echo {
        Some(n) => {
            let exts = der::constructed(tag::explicit(1), &[&nonce_extensions(n)]);
            der::sequence(&[&responder, &produced, &responses, &exts])
        }
        None => der::sequence(&[&responder, &produced, &responses]),
    };
    drop(responses);
    let signature = signer.sign(&tbs);
    let alg = signer.algorithm();
    let alg_der = alg.encode();
    let sig_der = der::bit_string(&signature);
    let basic = if signer_certs.is_empty() {
        der::sequence(&[&tbs, &alg_der, &sig_der])
    } else {
        let certs: Vec<&[u8]> = signer_certs.iter().map(Vec::as_slice).collect();
        let certs = der::constructed(tag::explicit(0), &[&der::sequence(&certs)]);
        der::sequence(&[&tbs, &alg_der, &sig_der, &certs])
    };
    let bytes = der::sequence(&[&der::oid(oid::OCSP_BASIC), &der::octet_string(&basic)]);
    let raw_der = der::sequence(&[
        &der::enumerated(ResponseStatus::Successful.code()),
        &der::constructed(tag::explicit(0), &[&bytes]),
    ]);
    Ok(OcspResponse {
        response_status: ResponseStatus::Successful,
        basic: Some(BasicResponse {
            responder_id: fields.responder_id.clone(),
            produced_at: time::truncate(fields.produced_at),
            single_responses: fields
                .single_responses
                .iter()
                .map(|s| SingleResponse {
                    this_update: time::truncate(s.this_update),
                    next_update: s.next_update.map(time::truncate),
                    ..s.clone()
                })
                .collect(),
            nonce_echo: fields.nonce_echo.clone(),
            signature_alg: alg,
            signature,
            signer_certs: signer_certs.to_vec(),
            tbs_der: tbs,
        }),
        raw_der,
    })
}

/// An unsigned error response carrying only a status.
pub fn encode_ocsp_error(status: ResponseStatus) -> Vec<u8> {
    der::sequence(&[&der::enumerated(status.code())])
}

pub fn decode_ocsp_response(bytes: &[u8]) -> Result<OcspResponse, CodecError> {
    let mut outer = Reader::new(bytes);
    let mut resp = outer.read_sequence()?;
    outer.finish()?;
    let response_status = ResponseStatus::from_code(resp.read_enumerated()?)?;
    let response_bytes = resp.read_optional(tag::explicit(0))?;
    resp.finish()?;

    let basic = match (response_status, response_bytes) {
        (ResponseStatus::Successful, None) => {
            return Err(der::malformed("successful response without responseBytes"))
        }
        (ResponseStatus::Successful, Some(rb)) => {
            let mut rbr = rb.reader();
            let mut seq = rbr.read_sequence()?;
            rbr.finish()?;
            let kind = seq.read_oid()?;
            if kind != oid::OCSP_BASIC {
                return Err(CodecError::UnsupportedAlgorithm(kind));
            }
            let body = seq.read_octet_string()?;
            seq.finish()?;
            Some(decode_basic(body)?)
        }
        (_, _) => None,
    };
    Ok(OcspResponse {
        response_status,
        basic,
        raw_der: bytes.to_vec(),
    })
}

fn decode_basic(body: &[u8]) -> Result<BasicResponse, CodecError> {
    let mut outer = Reader::new(body);
    let mut basic = outer.read_sequence()?;
    outer.finish()?;
    let tbs = basic.read(tag::SEQUENCE)?;
    if basic.is_empty() {
        return Err(CodecError::SignatureFieldMissing);
    }
    let signature_alg = SignatureAlgorithm::decode(&mut basic)?;
    if basic.is_empty() {
        return Err(CodecError::SignatureFieldMissing);
    }
    let signature = basic.read_bit_string()?.to_vec();
    let mut signer_certs = Vec::new();
    if let Some(certs) = basic.read_optional(tag::explicit(0))? {
        let mut cr = certs.reader();
        let mut list = cr.read_sequence()?;
        cr.finish()?;
        while !list.is_empty() {
            signer_certs.push(list.read(tag::SEQUENCE)?.raw.to_vec());
        }
    }
    basic.finish()?;

    let mut t = tbs.reader();
    if let Some(v) = t.read_optional(tag::explicit(0))? {
        let mut vr = v.reader();
        if vr.read_small_unsigned()? != 0 {
            return Err(der::malformed("unsupported response version"));
        }
        vr.finish()?;
    }
    let responder_id = ResponderId::decode(&mut t)?;
    let produced_at = time::decode(&t.read(tag::GENERALIZED_TIME)?)?;
    let mut list = t.read_sequence()?;
    let mut single_responses = Vec::new();
    while !list.is_empty() {
        single_responses.push(SingleResponse::decode(&mut list)?);
    }
    if single_responses.is_empty() {
        return Err(der::malformed("successful response without SingleResponses"));
    }
    let mut nonce_echo = None;
    if let Some(exts) = t.read_optional(tag::explicit(1))? {
        let mut er = exts.reader();
        nonce_echo = read_nonce(er.read(tag::SEQUENCE)?.value)?;
        er.finish()?;
    }
    t.finish()?;
    for s in &single_responses {
        if let CertStatus::Revoked {
            revocation_time, ..
        } = s.status
        {
            if revocation_time > produced_at {
                return Err(CodecError::InvalidField(
                    "revocation time after producedAt".into(),
                ));
            }
        }
    }
    Ok(BasicResponse {
        responder_id,
        produced_at,
        single_responses,
        nonce_echo,
        signature_alg,
        signature,
        signer_certs,
        tbs_der: tbs.raw.to_vec(),
    })
}

/// A response whose signature and signer have been checked.
#[derive(Clone, Copy, Debug)]
pub struct VerifiedResponse<'a> {
    response: &'a OcspResponse,
    basic: &'a BasicResponse,
}

impl<'a> VerifiedResponse<'a> {
    pub fn response(&self) -> &'a OcspResponse {
        self.response
    }

    pub fn produced_at(&self) -> Timestamp {
        self.basic.produced_at
    }

    pub fn single_responses(&self) -> &'a [SingleResponse] {
        &self.basic.single_responses
    }

    pub fn nonce_echo(&self) -> Option<&'a [u8]> {
        self.basic.nonce_echo.as_deref()
    }

    pub fn find(&self, id: &CertId) -> Option<&'a SingleResponse> {
        self.basic.single_responses.iter().find(|s| s.cert_id == *id)
    }
}

/// Checks that the response is signed by a trust anchor, or by a delegated
/// OCSP-signing certificate an anchor issued, and that the signer is valid
/// at `now`.
pub fn verify_ocsp_signature<'a>(
    resp: &'a OcspResponse,
    trust_anchors: &[CertMeta],
    now: Timestamp,
) -> Result<VerifiedResponse<'a>, CodecError> {
    let basic = match (&resp.response_status, &resp.basic) {
        (ResponseStatus::Successful, Some(b)) => b,
        (status, _) => return Err(CodecError::NotSuccessful(*status)),
    };
    let delegated;
    let signer: &CertMeta = match trust_anchors
        .iter()
        .find(|a| basic.responder_id.matches(a))
    {
        Some(anchor) => anchor,
        None => {
            let mut found = None;
            for der in &basic.signer_certs {
                let cert = parse_certificate(der)?;
                if !basic.responder_id.matches(&cert) {
                    continue;
                }
                let chained = cert.ocsp_signing
                    && trust_anchors
                        .iter()
                        .any(|a| cert.verify_issued_by(a).is_ok());
                if !chained {
                    return Err(CodecError::UntrustedSigner);
                }
                found = Some(cert);
                break;
            }
            delegated = found.ok_or(CodecError::UntrustedSigner)?;
            &delegated
        }
    };
    verify_signature(
        basic.signature_alg,
        &signer.public_key_info,
        &basic.tbs_der,
        &basic.signature,
    )?;
    if !signer.is_valid_at(now) {
        return Err(CodecError::SignerCertExpired(now));
    }
    Ok(VerifiedResponse {
        response: resp,
        basic,
    })
}

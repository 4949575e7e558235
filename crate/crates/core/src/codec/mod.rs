//! Wire formats: X.509 certificates, CRLs, OCSP requests and responses.

mod cert;
mod certid;
pub(crate) mod crl;
pub mod crypto;
mod name;
pub(crate) mod ocsp;
pub mod pem;
pub mod time;

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;

use crate::der::{self, oid, tag, Oid, Reader};

pub use cert::{load_certificate, parse_certificate, CertMeta, ParseWarning};
pub use certid::{compute_cert_id, CertId, HashAlg};
pub use crl::{parse_crl, CrlEncoding, CrlEntry, CrlSnapshot};
pub use crypto::{verify_signature, CountingSigner, EcdsaKey, Signer};
pub use name::DistinguishedName;
pub use ocsp::{
    decode_ocsp_request, decode_ocsp_response, encode_ocsp_error, encode_ocsp_request,
    encode_ocsp_response, verify_ocsp_signature, BasicResponse, CertStatus, OcspRequest,
    OcspResponse, ResponderId, ResponseFields, ResponseStatus, SingleResponse, VerifiedResponse,
    NONCE_LEN,
};
pub use time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("malformed DER: {0}")]
    MalformedDer(String),
    #[error("unsupported certificate version v{0}")]
    UnsupportedVersion(u64),
    #[error("unsupported algorithm {0}")]
    UnsupportedAlgorithm(Oid),
    #[error("signature field missing")]
    SignatureFieldMissing,
    #[error("issuer name does not match the certificate's issuer")]
    IssuerMismatch,
    #[error("signature does not verify")]
    SignatureInvalid,
    #[error("signer does not chain to a trust anchor")]
    UntrustedSigner,
    #[error("signer certificate is not valid at {0}")]
    SignerCertExpired(Timestamp),
    #[error("OCSP response status is {0}")]
    NotSuccessful(ResponseStatus),
    #[error("nonce of {0} bytes is outside 8..=32")]
    InvalidNonce(usize),
    #[error("OCSP request carries no CertIDs")]
    EmptyRequest,
    #[error("unsupported CRL reason code {0}")]
    UnsupportedReason(u64),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("PEM: {0}")]
    Pem(String),
}

/// A certificate serial number. Always positive.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SerialNumber(BigUint);

impl SerialNumber {
    pub fn new(n: BigUint) -> Result<Self, CodecError> {
        if n == BigUint::ZERO {
            return Err(CodecError::InvalidField("serial number must be positive".into()));
        }
        Ok(Self(n))
    }

    pub fn from_u128(n: u128) -> Result<Self, CodecError> {
        Self::new(BigUint::from(n))
    }

    pub fn from_bytes_be(bytes: &[u8]) -> Result<Self, CodecError> {
        Self::new(BigUint::from_bytes_be(bytes))
    }

    pub fn from_hex(s: &str) -> Result<Self, CodecError> {
        let s = s.trim().trim_start_matches("0x").replace(':', "");
        let n = BigUint::parse_bytes(s.as_bytes(), 16)
            .ok_or_else(|| CodecError::InvalidField(format!("bad hex serial {s:?}")))?;
        Self::new(n)
    }

    pub fn from_decimal(s: &str) -> Result<Self, CodecError> {
        let n = BigUint::parse_bytes(s.trim().as_bytes(), 10)
            .ok_or_else(|| CodecError::InvalidField(format!("bad decimal serial {s:?}")))?;
        Self::new(n)
    }

    pub fn as_biguint(&self) -> &BigUint {
        &self.0
    }

    pub fn to_bytes_be(&self) -> Vec<u8> {
        self.0.to_bytes_be()
    }

    /// Upper-case hex, as CRL dumps print serials.
    pub fn to_hex(&self) -> String {
        self.0.to_str_radix(16).to_uppercase()
    }

    pub fn to_decimal(&self) -> String {
        self.0.to_str_radix(10)
    }

    pub fn to_u128(&self) -> Option<u128> {
        u128::try_from(&self.0).ok()
    }

    pub(crate) fn encode(&self) -> Vec<u8> {
        der::unsigned(&self.0)
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let tlv = r.read(tag::INTEGER)?;
        Self::new(der::parse_unsigned(tlv.value)?)
    }
}

impl fmt::Display for SerialNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for SerialNumber {
    type Err = CodecError;

    /// Hex by default; a `dec:` prefix selects decimal.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.strip_prefix("dec:") {
            Some(d) => Self::from_decimal(d),
            None => Self::from_hex(s),
        }
    }
}

/// X.509 CRLReason codes 0 through 6.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RevocationReason {
    Unspecified,
    KeyCompromise,
    CaCompromise,
    AffiliationChanged,
    Superseded,
    CessationOfOperation,
    CertificateHold,
}

impl RevocationReason {
    pub const ALL: [RevocationReason; 7] = [
        Self::Unspecified,
        Self::KeyCompromise,
        Self::CaCompromise,
        Self::AffiliationChanged,
        Self::Superseded,
        Self::CessationOfOperation,
        Self::CertificateHold,
    ];

    pub fn code(self) -> u8 {
        match self {
            Self::Unspecified => 0,
            Self::KeyCompromise => 1,
            Self::CaCompromise => 2,
            Self::AffiliationChanged => 3,
            Self::Superseded => 4,
            Self::CessationOfOperation => 5,
            Self::CertificateHold => 6,
        }
    }

    pub fn from_code(code: u64) -> Result<Self, CodecError> {
        Self::ALL
            .iter()
            .copied()
            .find(|r| u64::from(r.code()) == code)
            .ok_or(CodecError::UnsupportedReason(code))
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Unspecified => "Unspecified",
            Self::KeyCompromise => "Key Compromise",
            Self::CaCompromise => "CA Compromise",
            Self::AffiliationChanged => "Affiliation Changed",
            Self::Superseded => "Superseded",
            Self::CessationOfOperation => "Cessation Of Operation",
            Self::CertificateHold => "Certificate Hold",
        }
    }
}

impl FromStr for RevocationReason {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Self::ALL
            .iter()
            .copied()
            .find(|r| {
                r.label()
                    .chars()
                    .filter(|c| c.is_ascii_alphanumeric())
                    .collect::<String>()
                    .to_ascii_lowercase()
                    == norm
            })
            .ok_or_else(|| CodecError::InvalidField(format!("unknown revocation reason {s:?}")))
    }
}

impl fmt::Display for RevocationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SignatureAlgorithm {
    EcdsaSha256,
    RsaSha256,
}

impl SignatureAlgorithm {
    pub fn oid(self) -> &'static [u8] {
        match self {
            Self::EcdsaSha256 => oid::ECDSA_WITH_SHA256,
            Self::RsaSha256 => oid::SHA256_WITH_RSA,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::EcdsaSha256 => "ecdsa-with-SHA256",
            Self::RsaSha256 => "sha256WithRSAEncryption",
        }
    }

    /// AlgorithmIdentifier. ECDSA omits parameters, RSA carries NULL.
    pub(crate) fn encode(self) -> Vec<u8> {
        match self {
            Self::EcdsaSha256 => der::sequence(&[&der::oid(self.oid())]),
            Self::RsaSha256 => der::sequence(&[&der::oid(self.oid()), &der::null()]),
        }
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let mut alg = r.read_sequence()?;
        let id = alg.read_oid()?;
        let parsed = if id == oid::ECDSA_WITH_SHA256 {
            Self::EcdsaSha256
        } else if id == oid::SHA256_WITH_RSA {
            Self::RsaSha256
        } else {
            return Err(CodecError::UnsupportedAlgorithm(id));
        };
        alg.read_optional(tag::NULL)?;
        alg.finish()?;
        Ok(parsed)
    }
}

impl fmt::Display for SignatureAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One extension, borrowing its value octets.
pub(crate) struct Extension<'a> {
    pub oid: Oid,
    pub critical: bool,
    pub value: &'a [u8],
}

/// Parses `Extensions ::= SEQUENCE OF Extension` given the SEQUENCE body.
pub(crate) fn parse_extensions(body: &[u8]) -> Result<Vec<Extension<'_>>, CodecError> {
    let mut r = Reader::new(body);
    let mut out = Vec::new();
    while !r.is_empty() {
        let mut ext = r.read_sequence()?;
        let oid = ext.read_oid()?;
        let critical = if ext.peek_tag() == Some(tag::BOOLEAN) {
            ext.read_boolean()?
        } else {
            false
        };
        let value = ext.read_octet_string()?;
        ext.finish()?;
        if out.iter().any(|e: &Extension<'_>| e.oid == oid) {
            return Err(der::malformed(format!("duplicate extension {oid}")));
        }
        out.push(Extension { oid, critical, value });
    }
    Ok(out)
}

pub(crate) fn encode_extension(id: &[u8], critical: bool, value: &[u8]) -> Vec<u8> {
    if critical {
        der::sequence(&[&der::oid(id), &der::boolean(true), &der::octet_string(value)])
    } else {
        der::sequence(&[&der::oid(id), &der::octet_string(value)])
    }
}

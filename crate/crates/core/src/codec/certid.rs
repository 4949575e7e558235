use std::fmt;

use sha1::Digest as _;

use super::{parse_certificate, CertMeta, CodecError, SerialNumber};
use crate::der::{self, oid, tag, Reader};

/// Digest used for the issuer hashes of a CertID.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum HashAlg {
    #[default]
    Sha1,
    Sha256,
}

impl HashAlg {
    pub fn digest(self, data: &[u8]) -> Vec<u8> {
        match self {
            Self::Sha1 => sha1::Sha1::digest(data).to_vec(),
            Self::Sha256 => sha2::Sha256::digest(data).to_vec(),
        }
    }

    pub fn output_len(self) -> usize {
        match self {
            Self::Sha1 => 20,
            Self::Sha256 => 32,
        }
    }

    fn oid(self) -> &'static [u8] {
        match self {
            Self::Sha1 => oid::SHA1,
            Self::Sha256 => oid::SHA256,
        }
    }
}

impl fmt::Display for HashAlg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sha1 => "sha1",
            Self::Sha256 => "sha256",
        })
    }
}

/// OCSP certificate identifier: issuer name hash, issuer key hash, serial.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CertId {
    pub hash_alg: HashAlg,
    pub issuer_name_hash: Vec<u8>,
    pub issuer_key_hash: Vec<u8>,
    pub serial_number: SerialNumber,
}

impl CertId {
    pub fn new(
        hash_alg: HashAlg,
        issuer_name_hash: Vec<u8>,
        issuer_key_hash: Vec<u8>,
        serial_number: SerialNumber,
    ) -> Result<Self, CodecError> {
        let n = hash_alg.output_len();
        if issuer_name_hash.len() != n || issuer_key_hash.len() != n {
            return Err(CodecError::InvalidField(format!(
                "{hash_alg} CertID hashes must be {n} bytes"
            )));
        }
        Ok(Self {
            hash_alg,
            issuer_name_hash,
            issuer_key_hash,
            serial_number,
        })
    }

    /// CertID for `serial` under `issuer`, without checking any subject.
    pub fn for_issuer(issuer: &CertMeta, serial: SerialNumber, hash_alg: HashAlg) -> Self {
        Self {
            hash_alg,
            issuer_name_hash: hash_alg.digest(issuer.subject_dn.as_der()),
            issuer_key_hash: hash_alg.digest(&issuer.public_key_bits),
            serial_number: serial,
        }
    }

    /// True when both issuer hashes match.
    pub fn same_issuer(&self, other: &CertId) -> bool {
        self.hash_alg == other.hash_alg
            && self.issuer_name_hash == other.issuer_name_hash
            && self.issuer_key_hash == other.issuer_key_hash
    }

    pub(crate) fn encode(&self) -> Vec<u8> {
        let alg = der::sequence(&[&der::oid(self.hash_alg.oid()), &der::null()]);
        der::sequence(&[
            &alg,
            &der::octet_string(&self.issuer_name_hash),
            &der::octet_string(&self.issuer_key_hash),
            &self.serial_number.encode(),
        ])
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let mut seq = r.read_sequence()?;
        let mut alg = seq.read_sequence()?;
        let id = alg.read_oid()?;
        let hash_alg = if id == oid::SHA1 {
            HashAlg::Sha1
        } else if id == oid::SHA256 {
            HashAlg::Sha256
        } else {
            return Err(CodecError::UnsupportedAlgorithm(id));
        };
        alg.read_optional(tag::NULL)?;
        alg.finish()?;
        let name_hash = seq.read_octet_string()?.to_vec();
        let key_hash = seq.read_octet_string()?.to_vec();
        let serial = SerialNumber::decode(&mut seq)?;
        seq.finish()?;
        Self::new(hash_alg, name_hash, key_hash, serial)
            .map_err(|e| der::malformed(e.to_string()))
    }
}

/// Builds the CertID of `subject` as issued by the certificate in `issuer_der`.
pub fn compute_cert_id(
    subject: &CertMeta,
    issuer_der: &[u8],
    hash_alg: HashAlg,
) -> Result<CertId, CodecError> {
    let issuer = parse_certificate(issuer_der)?;
    if subject.issuer_dn != issuer.subject_dn {
        return Err(CodecError::IssuerMismatch);
    }
    Ok(CertId::for_issuer(
        &issuer,
        subject.serial_number.clone(),
        hash_alg,
    ))
}

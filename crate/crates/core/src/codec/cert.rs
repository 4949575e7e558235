use super::crypto::{split_spki, verify_signature};
use super::time::{self, Timestamp};
use super::{
    parse_extensions, pem, CodecError, DistinguishedName, SerialNumber, SignatureAlgorithm,
};
use crate::der::{self, oid, tag, Oid, Reader};

/// Non-fatal findings recorded while parsing a certificate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseWarning {
    UnknownCriticalExtension(Oid),
}

/// The parts of an X.509 v3 certificate the revocation stack needs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CertMeta {
    pub serial_number: SerialNumber,
    pub signature_alg: SignatureAlgorithm,
    pub subject_dn: DistinguishedName,
    pub issuer_dn: DistinguishedName,
    pub not_before: Timestamp,
    pub not_after: Timestamp,
    /// DER `SubjectPublicKeyInfo`.
    pub public_key_info: Vec<u8>,
    /// Contents of the SPKI BIT STRING, without the unused-bits octet.
    pub public_key_bits: Vec<u8>,
    pub aia_ocsp_url: Option<String>,
    pub crl_dp_url: Option<String>,
    pub is_ca: bool,
    /// Carries the id-kp-OCSPSigning extended key usage.
    pub ocsp_signing: bool,
    pub warnings: Vec<ParseWarning>,
    pub tbs_der: Vec<u8>,
    pub signature: Vec<u8>,
    pub raw_der: Vec<u8>,
}

const KNOWN_EXTENSIONS: &[&[u8]] = &[
    oid::CE_BASIC_CONSTRAINTS,
    oid::CE_KEY_USAGE,
    oid::CE_EXT_KEY_USAGE,
    oid::CE_SUBJECT_KEY_ID,
    oid::CE_AUTHORITY_KEY_ID,
    oid::CE_SUBJECT_ALT_NAME,
    oid::CE_CRL_DISTRIBUTION_POINTS,
    oid::PE_AUTHORITY_INFO_ACCESS,
];

/// GeneralName `uniformResourceIdentifier [6] IA5String`.
const GN_URI: u8 = tag::implicit(6);

pub fn parse_certificate(der: &[u8]) -> Result<CertMeta, CodecError> {
    let mut outer = Reader::new(der);
    let cert = outer.read(tag::SEQUENCE)?;
    outer.finish()?;
    let mut cert_r = cert.reader();
    let tbs = cert_r.read(tag::SEQUENCE)?;
    if cert_r.is_empty() {
        return Err(CodecError::SignatureFieldMissing);
    }
    let outer_alg = SignatureAlgorithm::decode(&mut cert_r)?;
    if cert_r.is_empty() {
        return Err(CodecError::SignatureFieldMissing);
    }
    let signature = cert_r.read_bit_string()?.to_vec();
    cert_r.finish()?;

    let mut t = tbs.reader();
    let version = match t.read_optional(tag::explicit(0))? {
        Some(v) => {
            let mut vr = v.reader();
            let n = vr.read_small_unsigned()?;
            vr.finish()?;
            n
        }
        None => 0,
    };
    if version != 2 {
        return Err(CodecError::UnsupportedVersion(version + 1));
    }
    let serial_number = SerialNumber::decode(&mut t)?;
    let inner_alg = SignatureAlgorithm::decode(&mut t)?;
    if inner_alg != outer_alg {
        return Err(der::malformed("signature algorithm mismatch"));
    }
    let issuer_dn = DistinguishedName::from_der(t.read(tag::SEQUENCE)?.raw)?;
    let mut validity = t.read_sequence()?;
    let not_before = time::decode(&validity.read_any()?)?;
    let not_after = time::decode(&validity.read_any()?)?;
    validity.finish()?;
    if not_before > not_after {
        return Err(CodecError::InvalidField("notBefore after notAfter".into()));
    }
    let subject_dn = DistinguishedName::from_der(t.read(tag::SEQUENCE)?.raw)?;
    let spki = t.read(tag::SEQUENCE)?.raw;
    let (_, _, key_bits) = split_spki(spki)?;
    t.read_optional(tag::implicit(1))?;
    t.read_optional(tag::implicit(2))?;

    let mut meta = CertMeta {
        serial_number,
        signature_alg: outer_alg,
        subject_dn,
        issuer_dn,
        not_before,
        not_after,
        public_key_info: spki.to_vec(),
        public_key_bits: key_bits.to_vec(),
        aia_ocsp_url: None,
        crl_dp_url: None,
        is_ca: false,
        ocsp_signing: false,
        warnings: Vec::new(),
        tbs_der: tbs.raw.to_vec(),
        signature,
        raw_der: der.to_vec(),
    };

    if let Some(exts) = t.read_optional(tag::explicit(3))? {
        let mut er = exts.reader();
        let list = er.read(tag::SEQUENCE)?;
        er.finish()?;
        for ext in parse_extensions(list.value)? {
            let id = ext.oid.as_bytes();
            if id == oid::PE_AUTHORITY_INFO_ACCESS {
                meta.aia_ocsp_url = parse_aia_ocsp(ext.value)?;
            } else if id == oid::CE_CRL_DISTRIBUTION_POINTS {
                meta.crl_dp_url = parse_crl_dp(ext.value)?;
            } else if id == oid::CE_BASIC_CONSTRAINTS {
                let mut r = Reader::new(ext.value);
                let mut bc = r.read_sequence()?;
                r.finish()?;
                meta.is_ca = bc.peek_tag() == Some(tag::BOOLEAN) && bc.read_boolean()?;
            } else if id == oid::CE_EXT_KEY_USAGE {
                let mut r = Reader::new(ext.value);
                let mut ku = r.read_sequence()?;
                while !ku.is_empty() {
                    if ku.read_oid()? == oid::KP_OCSP_SIGNING {
                        meta.ocsp_signing = true;
                    }
                }
            } else if ext.critical && !KNOWN_EXTENSIONS.contains(&id) {
                meta.warnings
                    .push(ParseWarning::UnknownCriticalExtension(ext.oid.clone()));
            }
        }
    }
    t.finish()?;
    Ok(meta)
}

fn parse_aia_ocsp(value: &[u8]) -> Result<Option<String>, CodecError> {
    let mut r = Reader::new(value);
    let mut list = r.read_sequence()?;
    r.finish()?;
    let mut found = None;
    while !list.is_empty() {
        let mut desc = list.read_sequence()?;
        let method = desc.read_oid()?;
        let location = desc.read_any()?;
        if found.is_none() && method == oid::AD_OCSP && location.tag == GN_URI {
            found = Some(ia5(location.value)?);
        }
    }
    Ok(found)
}

fn parse_crl_dp(value: &[u8]) -> Result<Option<String>, CodecError> {
    let mut r = Reader::new(value);
    let mut points = r.read_sequence()?;
    r.finish()?;
    while !points.is_empty() {
        let mut dp = points.read_sequence()?;
        let Some(name) = dp.read_optional(tag::explicit(0))? else {
            continue;
        };
        let mut nr = name.reader();
        // fullName [0] IMPLICIT GeneralNames
        if let Some(full) = nr.read_optional(tag::explicit(0))? {
            let mut names = full.reader();
            while !names.is_empty() {
                let gn = names.read_any()?;
                if gn.tag == GN_URI {
                    return Ok(Some(ia5(gn.value)?));
                }
            }
        }
    }
    Ok(None)
}

fn ia5(bytes: &[u8]) -> Result<String, CodecError> {
    if !bytes.is_ascii() {
        return Err(der::malformed("non-ASCII IA5String"));
    }
    Ok(String::from_utf8_lossy(bytes).into_owned())
}

/// Accepts DER or a PEM `CERTIFICATE` block.
pub fn load_certificate(bytes: &[u8]) -> Result<CertMeta, CodecError> {
    parse_certificate(&pem::der_or_pem(pem::CERTIFICATE, bytes)?)
}

impl CertMeta {
    pub fn is_valid_at(&self, now: Timestamp) -> bool {
        self.not_before <= now && now <= self.not_after
    }

    pub fn is_self_signed(&self) -> bool {
        self.subject_dn == self.issuer_dn && self.verify_issued_by(self).is_ok()
    }

    /// Checks the name linkage and the signature of `self` under `issuer`'s key.
    pub fn verify_issued_by(&self, issuer: &CertMeta) -> Result<(), CodecError> {
        if self.issuer_dn != issuer.subject_dn {
            return Err(CodecError::IssuerMismatch);
        }
        verify_signature(
            self.signature_alg,
            &issuer.public_key_info,
            &self.tbs_der,
            &self.signature,
        )
    }

    pub fn to_pem(&self) -> String {
        pem::encode(pem::CERTIFICATE, &self.raw_der)
    }
}

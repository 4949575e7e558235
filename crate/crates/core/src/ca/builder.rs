//! Certificate encoding for the fixture authority.

use chrono::Duration;

use crate::codec::time::{self, Timestamp};
use crate::codec::{
    encode_extension, parse_certificate, CertMeta, CodecError, DistinguishedName, HashAlg,
    SerialNumber, Signer,
};
use crate::der::{self, oid, tag};

/// What goes into one certificate.
#[derive(Clone, Debug)]
pub struct CertProfile {
    pub subject: DistinguishedName,
    pub aia_ocsp_url: Option<String>,
    pub crl_dp_url: Option<String>,
    pub validity_days: u32,
    /// Fixed serial instead of a random one.
    pub serial: Option<SerialNumber>,
    /// Marks the certificate as a delegated OCSP signer.
    pub ocsp_signing: bool,
}

impl CertProfile {
    pub fn new(subject: DistinguishedName) -> Self {
        Self {
            subject,
            aia_ocsp_url: None,
            crl_dp_url: None,
            validity_days: 365,
            serial: None,
            ocsp_signing: false,
        }
    }

    pub fn aia(mut self, url: impl Into<String>) -> Self {
        self.aia_ocsp_url = Some(url.into());
        self
    }

    pub fn crl_dp(mut self, url: impl Into<String>) -> Self {
        self.crl_dp_url = Some(url.into());
        self
    }

    pub fn validity_days(mut self, days: u32) -> Self {
        self.validity_days = days;
        self
    }

    pub fn serial(mut self, serial: SerialNumber) -> Self {
        self.serial = Some(serial);
        self
    }

    pub fn ocsp_signing(mut self) -> Self {
        self.ocsp_signing = true;
        self
    }
}

pub(crate) struct TbsInput<'a> {
    pub serial: &'a SerialNumber,
    pub issuer: &'a DistinguishedName,
    pub subject: &'a DistinguishedName,
    pub not_before: Timestamp,
    pub validity_days: u32,
    pub subject_spki: &'a [u8],
    pub subject_key_bits: &'a [u8],
    pub issuer_key_bits: &'a [u8],
    pub is_ca: bool,
    pub aia_ocsp_url: Option<&'a str>,
    pub crl_dp_url: Option<&'a str>,
    pub ocsp_signing: bool,
}

fn uri(url: &str) -> Vec<u8> {
    der::encode(tag::implicit(6), url.as_bytes())
}

pub(crate) fn build_certificate(
    input: &TbsInput<'_>,
    signer: &dyn Signer,
) -> Result<CertMeta, CodecError> {
    let not_before = time::truncate(input.not_before);
    let not_after = not_before + Duration::days(i64::from(input.validity_days));

    let mut exts = Vec::new();
    let bc = if input.is_ca {
        der::sequence(&[&der::boolean(true)])
    } else {
        der::sequence(&[])
    };
    exts.push(encode_extension(oid::CE_BASIC_CONSTRAINTS, true, &bc));
    // keyCertSign|cRLSign for authorities, digitalSignature otherwise.
    let ku = if input.is_ca {
        der::encode(tag::BIT_STRING, &[0x01, 0x06])
    } else {
        der::encode(tag::BIT_STRING, &[0x07, 0x80])
    };
    exts.push(encode_extension(oid::CE_KEY_USAGE, true, &ku));
    let ski = HashAlg::Sha1.digest(input.subject_key_bits);
    exts.push(encode_extension(
        oid::CE_SUBJECT_KEY_ID,
        false,
        &der::octet_string(&ski),
    ));
    let aki = HashAlg::Sha1.digest(input.issuer_key_bits);
    exts.push(encode_extension(
        oid::CE_AUTHORITY_KEY_ID,
        false,
        &der::sequence(&[&der::encode(tag::implicit(0), &aki)]),
    ));
    if input.ocsp_signing {
        exts.push(encode_extension(
            oid::CE_EXT_KEY_USAGE,
            false,
            &der::sequence(&[&der::oid(oid::KP_OCSP_SIGNING)]),
        ));
    }
    if let Some(url) = input.aia_ocsp_url {
        let access = der::sequence(&[&der::oid(oid::AD_OCSP), &uri(url)]);
        exts.push(encode_extension(
            oid::PE_AUTHORITY_INFO_ACCESS,
            false,
            &der::sequence(&[&access]),
        ));
    }
    if let Some(url) = input.crl_dp_url {
        let full_name = der::constructed(tag::explicit(0), &[&uri(url)]);
        let dp_name = der::constructed(tag::explicit(0), &[&full_name]);
        exts.push(encode_extension(
            oid::CE_CRL_DISTRIBUTION_POINTS,
            false,
            &der::sequence(&[&der::sequence(&[&dp_name])]),
        ));
    }
    let ext_parts: Vec<&[u8]> = exts.iter().map(Vec::as_slice).collect();
    let extensions = der::constructed(tag::explicit(3), &[&der::sequence(&ext_parts)]);

    let alg = signer.algorithm().encode();
    let version = der::constructed(tag::explicit(0), &[&der::small_unsigned(2)]);
    let validity = der::sequence(&[&time::encode_x509(not_before), &time::encode_x509(not_after)]);
    let tbs = der::sequence(&[
        &version,
        &input.serial.encode(),
        &alg,
        input.issuer.as_der(),
        &validity,
        input.subject.as_der(),
        input.subject_spki,
        &extensions,
    ]);
    let sig = signer.sign(&tbs);
    let cert = der::sequence(&[&tbs, &alg, &der::bit_string(&sig)]);
    parse_certificate(&cert)
}

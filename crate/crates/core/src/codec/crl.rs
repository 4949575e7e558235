use std::collections::HashSet;

use num_bigint::BigUint;

use super::crypto::{verify_signature, Signer};
use super::time::{self, Timestamp};
use super::{
    encode_extension, parse_extensions, pem, CertMeta, CodecError, DistinguishedName,
    RevocationReason, SerialNumber, SignatureAlgorithm,
};
use crate::der::{self, oid, tag, Reader};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrlEncoding {
    Der,
    Pem,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrlEntry {
    pub serial_number: SerialNumber,
    pub revocation_date: Timestamp,
    pub reason: RevocationReason,
}

/// A parsed certificate revocation list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrlSnapshot {
    pub issuer_dn: DistinguishedName,
    pub last_update: Timestamp,
    /// Absent when the CRL carries no nextUpdate.
    pub next_update: Option<Timestamp>,
    pub entries: Vec<CrlEntry>,
    pub crl_number: Option<BigUint>,
    pub signature_alg: SignatureAlgorithm,
    pub signature: Vec<u8>,
    pub tbs_der: Vec<u8>,
    /// DER bytes the snapshot was parsed from.
    pub raw: Vec<u8>,
}

pub fn parse_crl(input: &[u8], encoding: CrlEncoding) -> Result<CrlSnapshot, CodecError> {
    let der = match encoding {
        CrlEncoding::Der => input.to_vec(),
        CrlEncoding::Pem => {
            let text = std::str::from_utf8(input).map_err(|e| CodecError::Pem(e.to_string()))?;
            pem::decode(pem::X509_CRL, text)?
        }
    };
    parse_der(der)
}

fn parse_der(der: Vec<u8>) -> Result<CrlSnapshot, CodecError> {
    let mut outer = Reader::new(&der);
    let list = outer.read(tag::SEQUENCE)?;
    outer.finish()?;
    let mut lr = list.reader();
    let tbs = lr.read(tag::SEQUENCE)?;
    if lr.is_empty() {
        return Err(CodecError::SignatureFieldMissing);
    }
    let signature_alg = SignatureAlgorithm::decode(&mut lr)?;
    if lr.is_empty() {
        return Err(CodecError::SignatureFieldMissing);
    }
    let signature = lr.read_bit_string()?.to_vec();
    lr.finish()?;

    let mut t = tbs.reader();
    if t.peek_tag() == Some(tag::INTEGER) {
        let v = t.read_small_unsigned()?;
        if v > 1 {
            return Err(CodecError::UnsupportedVersion(v + 1));
        }
    }
    if SignatureAlgorithm::decode(&mut t)? != signature_alg {
        return Err(der::malformed("signature algorithm mismatch"));
    }
    let issuer_dn = DistinguishedName::from_der(t.read(tag::SEQUENCE)?.raw)?;
    let last_update = time::decode(&t.read_any()?)?;
    let next_update = match t.peek_tag() {
        Some(tag::UTC_TIME | tag::GENERALIZED_TIME) => Some(time::decode(&t.read_any()?)?),
        _ => None,
    };
    if let Some(next) = next_update {
        if next < last_update {
            return Err(CodecError::InvalidField("nextUpdate before thisUpdate".into()));
        }
    }

    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    if let Some(revoked) = t.read_optional(tag::SEQUENCE)? {
        let mut rr = revoked.reader();
        while !rr.is_empty() {
            let mut entry = rr.read_sequence()?;
            let serial_number = SerialNumber::decode(&mut entry)?;
            let revocation_date = time::decode(&entry.read_any()?)?;
            let mut reason = RevocationReason::Unspecified;
            if let Some(exts) = entry.read_optional(tag::SEQUENCE)? {
                for ext in parse_extensions(exts.value)? {
                    if ext.oid == oid::CE_CRL_REASON {
                        let mut er = Reader::new(ext.value);
                        reason = RevocationReason::from_code(er.read_enumerated()?)?;
                        er.finish()?;
                    }
                }
            }
            entry.finish()?;
            if !seen.insert(serial_number.clone()) {
                return Err(der::malformed(format!("duplicate serial {serial_number}")));
            }
            entries.push(CrlEntry {
                serial_number,
                revocation_date,
                reason,
            });
        }
    }

    let mut crl_number = None;
    if let Some(exts) = t.read_optional(tag::explicit(0))? {
        let mut er = exts.reader();
        let list = er.read(tag::SEQUENCE)?;
        er.finish()?;
        for ext in parse_extensions(list.value)? {
            if ext.oid == oid::CE_CRL_NUMBER {
                let mut nr = Reader::new(ext.value);
                crl_number = Some(nr.read_unsigned()?);
                nr.finish()?;
            }
        }
    }
    t.finish()?;

    Ok(CrlSnapshot {
        issuer_dn,
        last_update,
        next_update,
        entries,
        crl_number,
        signature_alg,
        signature,
        tbs_der: tbs.raw.to_vec(),
        raw: der,
    })
}

impl CrlSnapshot {
    pub fn verify_signature(&self, issuer: &CertMeta) -> Result<(), CodecError> {
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
        pem::encode(pem::X509_CRL, &self.raw)
    }

    /// OpenSSL-style text dump.
    pub fn to_text(&self) -> String {
        let mut out = String::from("Certificate Revocation List (CRL):\n");
        out.push_str("Version 2 (0x1)\n");
        out.push_str(&format!("Signature Algorithm: {}\n", self.signature_alg));
        out.push_str(&format!("Issuer: {}\n", self.issuer_dn));
        out.push_str(&format!(
            "Last Update: {}\n",
            time::format_openssl(self.last_update)
        ));
        match self.next_update {
            Some(n) => out.push_str(&format!("Next Update: {}\n", time::format_openssl(n))),
            None => out.push_str("Next Update: NONE\n"),
        }
        if self.entries.is_empty() {
            out.push_str("No Revoked Certificates.\n");
        } else {
            out.push_str("Revoked Certificates:\n");
        }
        for e in &self.entries {
            out.push_str(&format!("Serial Number: {}\n", e.serial_number.to_hex()));
            out.push_str(&format!(
                "Revocation Date: {}\n",
                time::format_openssl(e.revocation_date)
            ));
            out.push_str("CRL entry extensions:\nX509v3 CRL Reason Code:\n");
            out.push_str(&format!("{}\n", e.reason));
        }
        out
    }
}

/// Encodes and signs a v2 CRL.
pub(crate) fn build_crl(
    issuer: &DistinguishedName,
    last_update: Timestamp,
    next_update: Option<Timestamp>,
    entries: &[CrlEntry],
    crl_number: u64,
    signer: &dyn Signer,
) -> Result<CrlSnapshot, CodecError> {
    let alg = signer.algorithm().encode();
    let encoded_entries: Vec<Vec<u8>> = entries
        .iter()
        .map(|e| {
            let reason = der::enumerated(e.reason.code());
            let ext = encode_extension(oid::CE_CRL_REASON, false, &reason);
            der::sequence(&[
                &e.serial_number.encode(),
                &time::encode_x509(e.revocation_date),
                &der::sequence(&[&ext]),
            ])
        })
        .collect();
    let number_ext = encode_extension(oid::CE_CRL_NUMBER, false, &der::small_unsigned(crl_number));
    let exts = der::constructed(tag::explicit(0), &[&der::sequence(&[&number_ext])]);

    let version = der::small_unsigned(1);
    let this = time::encode_x509(last_update);
    let next = next_update.map(time::encode_x509);
    let revoked = if entries.is_empty() {
        None
    } else {
        let parts: Vec<&[u8]> = encoded_entries.iter().map(Vec::as_slice).collect();
        Some(der::sequence(&parts))
    };
    let mut parts: Vec<&[u8]> = vec![&version, &alg, issuer.as_der(), &this];
    if let Some(n) = &next {
        parts.push(n);
    }
    if let Some(r) = &revoked {
        parts.push(r);
    }
    parts.push(&exts);
    let tbs = der::sequence(&parts);
    let sig = signer.sign(&tbs);
    let crl = der::sequence(&[&tbs, &alg, &der::bit_string(&sig)]);
    parse_der(crl)
}

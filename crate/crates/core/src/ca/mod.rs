//! Fixture certificate authority.
//!
//! Mints the root, leaf certificates, CRLs and signed OCSP responses that the
//! rest of the stack is exercised against. Keys are ECDSA P-256; an optional
//! seed makes every key and serial reproducible.

mod builder;
mod store;

use std::collections::BTreeMap;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::codec::crl::build_crl;
use crate::codec::ocsp::build_response;
use crate::codec::time::{self, Timestamp};
use crate::codec::{
    CertId, CertMeta, CertStatus, CodecError, CrlEntry, CrlSnapshot, DistinguishedName, EcdsaKey,
    OcspResponse, ResponderId, ResponseFields, RevocationReason, SerialNumber, Signer,
    SingleResponse,
};

pub use builder::CertProfile;
pub use store::{write_crl, CRL_FILE, ISSUED_DIR, ROOT_CERT, ROOT_KEY};

use builder::{build_certificate, TbsInput};

pub const ROOT_VALIDITY_DAYS: u32 = 3650;

#[derive(Debug, thiserror::Error)]
pub enum CaError {
    #[error("serial {0} was never issued by this authority")]
    UnknownSerial(SerialNumber),
    #[error("serial {0} is already revoked")]
    AlreadyRevoked(SerialNumber),
    #[error("serial {0} is already in use")]
    DuplicateSerial(SerialNumber),
    #[error("thisUpdate must precede nextUpdate")]
    InvalidWindow,
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("state directory {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("state directory: {0}")]
    State(String),
}

#[derive(Clone)]
pub struct AuthorityState {
    root_key: EcdsaKey,
    root_cert: CertMeta,
    issued: BTreeMap<SerialNumber, CertMeta>,
    revoked: BTreeMap<SerialNumber, (Timestamp, RevocationReason)>,
    crl_number: u64,
    rng: ChaCha20Rng,
}

fn make_rng(seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_rng(&mut rand::rng()),
    }
}

fn random_serial(rng: &mut impl RngCore) -> SerialNumber {
    loop {
        let mut bytes = [0u8; 16];
        rng.fill_bytes(&mut bytes);
        if let Ok(s) = SerialNumber::from_bytes_be(&bytes) {
            return s;
        }
    }
}

/// Creates a self-signed root valid for ten years from `now`.
pub fn generate_root(
    subject: &DistinguishedName,
    now: Timestamp,
    seed: Option<u64>,
) -> Result<AuthorityState, CaError> {
    let mut rng = make_rng(seed);
    let root_key = EcdsaKey::generate(&mut rng);
    let serial = random_serial(&mut rng);
    let spki = root_key.public_key_info();
    let bits = root_key.public_key_bits();
    let root_cert = build_certificate(
        &TbsInput {
            serial: &serial,
            issuer: subject,
            subject,
            not_before: now,
            validity_days: ROOT_VALIDITY_DAYS,
            subject_spki: &spki,
            subject_key_bits: &bits,
            issuer_key_bits: &bits,
            is_ca: true,
            aia_ocsp_url: None,
            crl_dp_url: None,
            ocsp_signing: false,
        },
        &root_key,
    )?;
    Ok(AuthorityState {
        root_key,
        root_cert,
        issued: BTreeMap::new(),
        revoked: BTreeMap::new(),
        crl_number: 0,
        rng,
    })
}

impl AuthorityState {
    pub fn root_cert(&self) -> &CertMeta {
        &self.root_cert
    }

    pub fn root_key(&self) -> &EcdsaKey {
        &self.root_key
    }

    pub fn issued(&self) -> &BTreeMap<SerialNumber, CertMeta> {
        &self.issued
    }

    pub fn revoked(&self) -> &BTreeMap<SerialNumber, (Timestamp, RevocationReason)> {
        &self.revoked
    }

    pub fn crl_number(&self) -> u64 {
        self.crl_number
    }

    pub fn issue_cert(&mut self, profile: &CertProfile, now: Timestamp) -> Result<CertMeta, CaError> {
        self.issue_with_key(profile, now).map(|(cert, _)| cert)
    }

    /// Issues a certificate and hands back the subject's private key.
    pub fn issue_with_key(
        &mut self,
        profile: &CertProfile,
        now: Timestamp,
    ) -> Result<(CertMeta, EcdsaKey), CaError> {
        let serial = match &profile.serial {
            Some(s) if self.issued.contains_key(s) || *s == self.root_cert.serial_number => {
                return Err(CaError::DuplicateSerial(s.clone()))
            }
            Some(s) => s.clone(),
            None => loop {
                let s = random_serial(&mut self.rng);
                if !self.issued.contains_key(&s) && s != self.root_cert.serial_number {
                    break s;
                }
            },
        };
        let key = EcdsaKey::generate(&mut self.rng);
        let spki = key.public_key_info();
        let cert = build_certificate(
            &TbsInput {
                serial: &serial,
                issuer: &self.root_cert.subject_dn,
                subject: &profile.subject,
                not_before: now,
                validity_days: profile.validity_days,
                subject_spki: &spki,
                subject_key_bits: &key.public_key_bits(),
                issuer_key_bits: &self.root_cert.public_key_bits,
                is_ca: false,
                aia_ocsp_url: profile.aia_ocsp_url.as_deref(),
                crl_dp_url: profile.crl_dp_url.as_deref(),
                ocsp_signing: profile.ocsp_signing,
            },
            &self.root_key,
        )?;
        self.issued.insert(serial, cert.clone());
        Ok((cert, key))
    }

    /// Records a revocation. Errors leave the state untouched.
    pub fn revoke(
        &mut self,
        serial: &SerialNumber,
        reason: RevocationReason,
        at: Timestamp,
    ) -> Result<(), CaError> {
        if !self.issued.contains_key(serial) {
            return Err(CaError::UnknownSerial(serial.clone()));
        }
        if self.revoked.contains_key(serial) {
            return Err(CaError::AlreadyRevoked(serial.clone()));
        }
        self.revoked
            .insert(serial.clone(), (time::truncate(at), reason));
        Ok(())
    }

    /// Signs a CRL of every revocation so far, with no nextUpdate.
    pub fn emit_crl(&mut self, now: Timestamp) -> Result<CrlSnapshot, CaError> {
        self.emit_crl_until(now, None)
    }

    pub fn emit_crl_until(
        &mut self,
        now: Timestamp,
        next_update: Option<Timestamp>,
    ) -> Result<CrlSnapshot, CaError> {
        let entries: Vec<CrlEntry> = self
            .revoked
            .iter()
            .map(|(serial, (at, reason))| CrlEntry {
                serial_number: serial.clone(),
                revocation_date: *at,
                reason: *reason,
            })
            .collect();
        let number = self.crl_number + 1;
        let crl = build_crl(
            &self.root_cert.subject_dn,
            time::truncate(now),
            next_update.map(time::truncate),
            &entries,
            number,
            &self.root_key,
        )?;
        self.crl_number = number;
        Ok(crl)
    }

    /// Signs a single-certificate OCSP response with the root key.
    pub fn sign_ocsp_response(
        &self,
        cert_id: &CertId,
        status: CertStatus,
        this_update: Timestamp,
        next_update: Timestamp,
        nonce_echo: Option<&[u8]>,
    ) -> Result<OcspResponse, CaError> {
        self.sign_ocsp_response_with(
            &self.root_key,
            ResponderId::ByName(self.root_cert.subject_dn.clone()),
            &[],
            cert_id,
            status,
            this_update,
            next_update,
            nonce_echo,
        )
    }

    /// Like [`Self::sign_ocsp_response`] but with an arbitrary signer, for
    /// delegated-responder and rogue-signer fixtures.
    #[allow(clippy::too_many_arguments)]
    pub fn sign_ocsp_response_with(
        &self,
        signer: &dyn Signer,
        responder_id: ResponderId,
        signer_certs: &[Vec<u8>],
        cert_id: &CertId,
        status: CertStatus,
        this_update: Timestamp,
        next_update: Timestamp,
        nonce_echo: Option<&[u8]>,
    ) -> Result<OcspResponse, CaError> {
        let this_update = time::truncate(this_update);
        let next_update = time::truncate(next_update);
        if this_update >= next_update {
            return Err(CaError::InvalidWindow);
        }
        let fields = ResponseFields {
            responder_id,
            produced_at: this_update,
            single_responses: vec![SingleResponse {
                cert_id: cert_id.clone(),
                status,
                this_update,
                next_update: Some(next_update),
            }],
            nonce_echo: nonce_echo.map(<[u8]>::to_vec),
        };
        Ok(build_response(&fields, signer, signer_certs)?)
    }

    pub fn save(&self, dir: &Path) -> Result<(), CaError> {
        store::save(self, dir)
    }

    /// Restores an authority from a state directory. Revocations and the CRL
    /// number are recovered from `crl.pem`.
    pub fn load(dir: &Path, seed: Option<u64>) -> Result<Self, CaError> {
        store::load(dir, seed)
    }
}

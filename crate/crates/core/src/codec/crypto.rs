//! Signing and signature verification.
//!
//! Everything this crate signs uses ECDSA P-256 with SHA-256. Verification
//! additionally accepts RSA PKCS#1 v1.5 with SHA-256 so responses and CRLs
//! from RSA-based authorities can be checked.

use std::sync::atomic::{AtomicUsize, Ordering};

use p256::ecdsa::signature::{Signer as _, Verifier as _};
use p256::pkcs8::{DecodePrivateKey, EncodePrivateKey, LineEnding};
use rand::RngCore;

use super::{CodecError, SignatureAlgorithm};
use crate::der::{self, oid, Oid, Reader};

pub trait Signer: Send + Sync {
    fn algorithm(&self) -> SignatureAlgorithm;

    /// DER-encoded signature over `message`.
    fn sign(&self, message: &[u8]) -> Vec<u8>;

    /// DER `SubjectPublicKeyInfo` of the verification key.
    fn public_key_info(&self) -> Vec<u8>;
}

impl<S: Signer + ?Sized> Signer for std::sync::Arc<S> {
    fn algorithm(&self) -> SignatureAlgorithm {
        (**self).algorithm()
    }
    fn sign(&self, message: &[u8]) -> Vec<u8> {
        (**self).sign(message)
    }
    fn public_key_info(&self) -> Vec<u8> {
        (**self).public_key_info()
    }
}

/// A P-256 signing key. Signatures are deterministic (RFC 6979).
#[derive(Clone)]
pub struct EcdsaKey {
    key: p256::ecdsa::SigningKey,
}

impl EcdsaKey {
    pub fn generate(rng: &mut impl RngCore) -> Self {
        loop {
            let mut bytes = [0u8; 32];
            rng.fill_bytes(&mut bytes);
            if let Ok(key) = p256::ecdsa::SigningKey::from_slice(&bytes) {
                return Self { key };
            }
        }
    }

    pub fn from_pkcs8_pem(text: &str) -> Result<Self, CodecError> {
        p256::ecdsa::SigningKey::from_pkcs8_pem(text)
            .map(|key| Self { key })
            .map_err(|e| CodecError::Pem(format!("private key: {e}")))
    }

    pub fn to_pkcs8_pem(&self) -> String {
        self.key
            .to_pkcs8_pem(LineEnding::LF)
            .expect("P-256 keys always encode")
            .to_string()
    }

    /// Uncompressed SEC1 point, the BIT STRING payload of the SPKI.
    pub fn public_key_bits(&self) -> Vec<u8> {
        self.key
            .verifying_key()
            .to_encoded_point(false)
            .as_bytes()
            .to_vec()
    }
}

impl Signer for EcdsaKey {
    fn algorithm(&self) -> SignatureAlgorithm {
        SignatureAlgorithm::EcdsaSha256
    }

    fn sign(&self, message: &[u8]) -> Vec<u8> {
        let sig: p256::ecdsa::Signature = self.key.sign(message);
        sig.to_der().as_bytes().to_vec()
    }

    fn public_key_info(&self) -> Vec<u8> {
        let alg = der::sequence(&[&der::oid(oid::EC_PUBLIC_KEY), &der::oid(oid::PRIME256V1)]);
        der::sequence(&[&alg, &der::bit_string(&self.public_key_bits())])
    }
}

impl std::fmt::Debug for EcdsaKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("EcdsaKey(..)")
    }
}

/// Wraps a signer and counts how many signatures it produced.
pub struct CountingSigner<S> {
    inner: S,
    count: AtomicUsize,
}

impl<S: Signer> CountingSigner<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            count: AtomicUsize::new(0),
        }
    }

    pub fn count(&self) -> usize {
        self.count.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }
}

impl<S: Signer> Signer for CountingSigner<S> {
    fn algorithm(&self) -> SignatureAlgorithm {
        self.inner.algorithm()
    }

    fn sign(&self, message: &[u8]) -> Vec<u8> {
        self.count.fetch_add(1, Ordering::SeqCst);
        self.inner.sign(message)
    }

    fn public_key_info(&self) -> Vec<u8> {
        self.inner.public_key_info()
    }
}

/// Splits a SubjectPublicKeyInfo into `(algorithm, curve-or-none, key bits)`.
pub(crate) fn split_spki(spki: &[u8]) -> Result<(Oid, Option<Oid>, &[u8]), CodecError> {
    let mut outer = Reader::new(spki);
    let mut seq = outer.read_sequence()?;
    outer.finish()?;
    let mut alg = seq.read_sequence()?;
    let alg_oid = alg.read_oid()?;
    let param = match alg.peek_tag() {
        Some(crate::der::tag::OID) => Some(alg.read_oid()?),
        Some(_) => {
            alg.read_any()?;
            None
        }
        None => None,
    };
    alg.finish()?;
    let bits = seq.read_bit_string()?;
    seq.finish()?;
    Ok((alg_oid, param, bits))
}

/// Verifies `signature` over `message` under the key in `spki`.
pub fn verify_signature(
    alg: SignatureAlgorithm,
    spki: &[u8],
    message: &[u8],
    signature: &[u8],
) -> Result<(), CodecError> {
    let (key_alg, param, bits) = split_spki(spki)?;
    match alg {
        SignatureAlgorithm::EcdsaSha256 => {
            if key_alg != oid::EC_PUBLIC_KEY {
                return Err(CodecError::SignatureInvalid);
            }
            match &param {
                Some(curve) if *curve == oid::PRIME256V1 => {}
                Some(curve) => return Err(CodecError::UnsupportedAlgorithm(curve.clone())),
                None => return Err(CodecError::SignatureInvalid),
            }
            let key = p256::ecdsa::VerifyingKey::from_sec1_bytes(bits)
                .map_err(|_| CodecError::SignatureInvalid)?;
            let sig = p256::ecdsa::Signature::from_der(signature)
                .map_err(|_| CodecError::SignatureInvalid)?;
            key.verify(message, &sig)
                .map_err(|_| CodecError::SignatureInvalid)
        }
        SignatureAlgorithm::RsaSha256 => {
            use rsa::pkcs1::DecodeRsaPublicKey;
            use rsa::signature::Verifier as _;
            if key_alg != oid::RSA_ENCRYPTION {
                return Err(CodecError::SignatureInvalid);
            }
            let key = rsa::RsaPublicKey::from_pkcs1_der(bits)
                .map_err(|_| CodecError::SignatureInvalid)?;
            let verifier = rsa::pkcs1v15::VerifyingKey::<sha2::Sha256>::new(key);
            let sig = rsa::pkcs1v15::Signature::try_from(signature)
                .map_err(|_| CodecError::SignatureInvalid)?;
            verifier
                .verify(message, &sig)
                .map_err(|_| CodecError::SignatureInvalid)
        }
    }
}

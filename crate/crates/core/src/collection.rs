//! Signed collections: one signature over a bitmap of revocation bits.
//!
//! Bit `i` of the bitmap (most significant bit of byte `i / 8` first) is the
//! revocation bit of the certificate assigned index `i`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::codec::time::{self, Timestamp};
use crate::codec::{verify_signature, SerialNumber, SignatureAlgorithm, Signer};

pub const DEFAULT_BIT_COUNT: u64 = 1 << 20;
const MAGIC: &[u8; 4] = b"SGSC";
const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CollectionError {
    #[error("a collection needs at least one status")]
    EmptyStatuses,
    #[error("index {index} is outside a collection of {bit_count} bits")]
    IndexOutOfRange { index: u64, bit_count: u64 },
    #[error("collection {0} is full")]
    CollectionFull(String),
    #[error("bad collection file: {0}")]
    Format(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitStatus {
    Revoked,
    Valid,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedCollection {
    pub name: String,
    pub issued_at: Timestamp,
    pub bit_count: u64,
    pub bitmap: Vec<u8>,
    pub signature_alg: SignatureAlgorithm,
    pub signature: Vec<u8>,
}

fn push_field(out: &mut Vec<u8>, field: &[u8]) {
    out.extend_from_slice(&(field.len() as u32).to_be_bytes());
    out.extend_from_slice(field);
}

/// The bytes covered by the signature: name, issued_at (Unix seconds),
/// bit_count and bitmap, each behind a 4-byte big-endian length.
pub fn signed_payload(name: &str, issued_at: Timestamp, bit_count: u64, bitmap: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(bitmap.len() + name.len() + 32);
    push_field(&mut out, name.as_bytes());
    push_field(&mut out, &issued_at.timestamp().to_be_bytes());
    push_field(&mut out, &bit_count.to_be_bytes());
    push_field(&mut out, bitmap);
    out
}

fn take_field<'a>(rest: &mut &'a [u8]) -> Result<&'a [u8], CollectionError> {
    let truncated = || CollectionError::Format("truncated".into());
    let len: [u8; 4] = rest.get(..4).ok_or_else(truncated)?.try_into().expect("4 bytes");
    let n = u32::from_be_bytes(len) as usize;
    let body = rest.get(4..4 + n).ok_or_else(truncated)?;
    *rest = &rest[4 + n..];
    Ok(body)
}

fn pack(statuses: &[bool]) -> Vec<u8> {
    let mut bitmap = vec![0u8; statuses.len().div_ceil(8)];
    for (i, _) in statuses.iter().enumerate().filter(|(_, &s)| s) {
        bitmap[i / 8] |= 0x80 >> (i % 8);
    }
    bitmap
}

/// Packs `statuses` and signs the result once.
pub fn build_collection(
    name: &str,
    statuses: &[bool],
    issued_at: Timestamp,
    signer: &dyn Signer,
) -> Result<SignedCollection, CollectionError> {
    if statuses.is_empty() {
        return Err(CollectionError::EmptyStatuses);
    }
    let issued_at = time::truncate(issued_at);
    let bit_count = statuses.len() as u64;
    let bitmap = pack(statuses);
    let signature = signer.sign(&signed_payload(name, issued_at, bit_count, &bitmap));
    Ok(SignedCollection {
        name: name.to_string(),
        issued_at,
        bit_count,
        bitmap,
        signature_alg: signer.algorithm(),
        signature,
    })
}

pub fn status_at(sc: &SignedCollection, index: u64) -> Result<BitStatus, CollectionError> {
    if index >= sc.bit_count {
        return Err(CollectionError::IndexOutOfRange {
            index,
            bit_count: sc.bit_count,
        });
    }
    let byte = sc.bitmap[(index / 8) as usize];
    Ok(if byte & (0x80 >> (index % 8)) != 0 {
        BitStatus::Revoked
    } else {
        BitStatus::Valid
    })
}

/// True iff the collection is well formed and its signature verifies under
/// the DER SubjectPublicKeyInfo `spki`.
pub fn verify_collection(sc: &SignedCollection, spki: &[u8]) -> bool {
    let expected_len = sc.bit_count.div_ceil(8);
    if sc.bit_count == 0 || sc.bitmap.len() as u64 != expected_len {
        return false;
    }
    let tail_bits = (sc.bit_count % 8) as u32;
    if tail_bits != 0 {
        let mask = 0xffu8 >> tail_bits;
        if sc.bitmap.last().is_some_and(|b| b & mask != 0) {
            return false;
        }
    }
    let payload = signed_payload(&sc.name, sc.issued_at, sc.bit_count, &sc.bitmap);
    verify_signature(sc.signature_alg, spki, &payload, &sc.signature).is_ok()
}

impl SignedCollection {
    pub fn revoked_count(&self) -> u64 {
        self.bitmap.iter().map(|b| u64::from(b.count_ones())).sum()
    }

    /// `SGSC`, version byte, signed payload, algorithm byte, then the
    /// length-prefixed signature.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.bitmap.len() + 128);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&signed_payload(
            &self.name,
            self.issued_at,
            self.bit_count,
            &self.bitmap,
        ));
        out.push(match self.signature_alg {
            SignatureAlgorithm::EcdsaSha256 => 1,
            SignatureAlgorithm::RsaSha256 => 2,
        });
        push_field(&mut out, &self.signature);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CollectionError> {
        let bad = |m: &str| CollectionError::Format(m.to_string());
        if bytes.len() < 5 || &bytes[..4] != MAGIC {
            return Err(bad("missing SGSC magic"));
        }
        if bytes[4] != VERSION {
            return Err(CollectionError::Format(format!("unsupported version {}", bytes[4])));
        }
        let mut rest = &bytes[5..];
        let name =
            String::from_utf8(take_field(&mut rest)?.to_vec()).map_err(|_| bad("name is not UTF-8"))?;
        let secs: [u8; 8] = take_field(&mut rest)?.try_into().map_err(|_| bad("issued_at"))?;
        let count: [u8; 8] = take_field(&mut rest)?.try_into().map_err(|_| bad("bit_count"))?;
        let bitmap = take_field(&mut rest)?.to_vec();
        let (alg, sig_part) = rest.split_first().ok_or_else(|| bad("truncated"))?;
        let signature_alg = match alg {
            1 => SignatureAlgorithm::EcdsaSha256,
            2 => SignatureAlgorithm::RsaSha256,
            _ => return Err(bad("unknown signature algorithm")),
        };
        rest = sig_part;
        let signature = take_field(&mut rest)?.to_vec();
        if !rest.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self {
            name,
            issued_at: time::from_unix(i64::from_be_bytes(secs)),
            bit_count: u64::from_be_bytes(count),
            bitmap,
            signature_alg,
            signature,
        })
    }

    /// Text dump: header fields, then the indices of set bits.
    pub fn dump(&self) -> String {
        let mut out = format!(
            "name: {}\nissued_at: {}\nbit_count: {}\nrevoked: {}\nsignature_alg: {}\nsignature: ",
            self.name,
            time::format_sql(self.issued_at),
            self.bit_count,
            self.revoked_count(),
            self.signature_alg,
        );
        for b in &self.signature {
            let _ = write!(out, "{b:02x}");
        }
        out.push_str("\nrevoked_indices:");
        for (i, byte) in self.bitmap.iter().enumerate() {
            for bit in 0..8 {
                if byte & (0x80 >> bit) != 0 {
                    let _ = write!(out, " {}", i * 8 + bit);
                }
            }
        }
        out.push('\n');
        out
    }
}

/// Stable serial → (collection, index) assignment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CollectionAssignment {
    bit_count: u64,
    current: String,
    by_serial: HashMap<SerialNumber, (String, u64)>,
    next_free: BTreeMap<String, u64>,
}

impl CollectionAssignment {
    pub fn new(first_collection: &str, bit_count: u64) -> Self {
        Self {
            bit_count,
            current: first_collection.to_string(),
            by_serial: HashMap::new(),
            next_free: BTreeMap::from([(first_collection.to_string(), 0)]),
        }
    }

    pub fn bit_count(&self) -> u64 {
        self.bit_count
    }

    pub fn current(&self) -> &str {
        &self.current
    }

    /// Existing serials keep their slot; new ones take the next free index
    /// of the current collection.
    pub fn assign_index(&mut self, serial: &SerialNumber) -> Result<(String, u64), CollectionError> {
        if let Some(slot) = self.by_serial.get(serial) {
            return Ok(slot.clone());
        }
        let next = self.next_free.entry(self.current.clone()).or_insert(0);
        if *next >= self.bit_count {
            return Err(CollectionError::CollectionFull(self.current.clone()));
        }
        let slot = (self.current.clone(), *next);
        *next += 1;
        self.by_serial.insert(serial.clone(), slot.clone());
        Ok(slot)
    }

    pub fn lookup(&self, serial: &SerialNumber) -> Option<(&str, u64)> {
        self.by_serial.get(serial).map(|(n, i)| (n.as_str(), *i))
    }

    /// Directs new assignments to a fresh collection generation.
    pub fn start_collection(&mut self, name: &str) {
        self.current = name.to_string();
        self.next_free.entry(name.to_string()).or_insert(0);
    }

    /// Status vector for `name`, sized to the indices handed out so far.
    pub fn statuses(&self, name: &str, is_revoked: impl Fn(&SerialNumber) -> bool) -> Vec<bool> {
        let len = self.next_free.get(name).copied().unwrap_or(0) as usize;
        let mut out = vec![false; len];
        for (serial, (coll, idx)) in &self.by_serial {
            if coll == name && is_revoked(serial) {
                out[*idx as usize] = true;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{CountingSigner, EcdsaKey};
    use rand::SeedableRng;

    fn key() -> EcdsaKey {
        EcdsaKey::generate(&mut rand_chacha::ChaCha20Rng::seed_from_u64(7))
    }

    #[test]
    fn bits_are_msb_first() {
        assert_eq!(pack(&[true, false, false, false, false, false, false, false, true]), vec![0x80, 0x80]);
    }

    #[test]
    fn build_lookup_verify_and_file_round_trip() {
        let signer = CountingSigner::new(key());
        let statuses: Vec<bool> = (0..1000).map(|i| i % 7 == 3).collect();
        let sc = build_collection("c0", &statuses, time::from_unix(1_700_000_000), &signer).unwrap();
        assert_eq!(signer.count(), 1);
        for (i, s) in statuses.iter().enumerate() {
            let expect = if *s { BitStatus::Revoked } else { BitStatus::Valid };
            assert_eq!(status_at(&sc, i as u64).unwrap(), expect);
        }
        assert!(status_at(&sc, 1000).is_err());
        let spki = signer.public_key_info();
        assert!(verify_collection(&sc, &spki));
        let back = SignedCollection::from_bytes(&sc.to_bytes()).unwrap();
        assert_eq!(back, sc);

        let mut later = sc.clone();
        later.issued_at += chrono::Duration::seconds(1);
        assert!(!verify_collection(&later, &spki));
    }

    #[test]
    fn assignment_is_stable_and_bounded() {
        let mut a = CollectionAssignment::new("c0", 2);
        let s = |n| SerialNumber::from_u128(n).unwrap();
        assert_eq!(a.assign_index(&s(5)).unwrap(), ("c0".to_string(), 0));
        assert_eq!(a.assign_index(&s(9)).unwrap(), ("c0".to_string(), 1));
        assert_eq!(a.assign_index(&s(5)).unwrap(), ("c0".to_string(), 0));
        assert!(matches!(a.assign_index(&s(11)), Err(CollectionError::CollectionFull(_))));
        a.start_collection("c1");
        assert_eq!(a.assign_index(&s(11)).unwrap(), ("c1".to_string(), 0));
        assert_eq!(a.statuses("c0", |x| *x == s(9)), vec![false, true]);
    }
}

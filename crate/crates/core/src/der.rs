//! Minimal DER (X.690) reader and writer.
//!
//! Only the subset needed for X.509 certificates, CRLs and OCSP is handled:
//! single-byte tags, definite lengths of at most four octets, and minimal
//! encodings throughout. Anything else is rejected as malformed.

use std::fmt;

use num_bigint::BigUint;

use crate::codec::CodecError;

pub mod tag {
    pub const BOOLEAN: u8 = 0x01;
    pub const INTEGER: u8 = 0x02;
    pub const BIT_STRING: u8 = 0x03;
    pub const OCTET_STRING: u8 = 0x04;
    pub const NULL: u8 = 0x05;
    pub const OID: u8 = 0x06;
    pub const ENUMERATED: u8 = 0x0a;
    pub const UTF8_STRING: u8 = 0x0c;
    pub const PRINTABLE_STRING: u8 = 0x13;
    pub const T61_STRING: u8 = 0x14;
    pub const IA5_STRING: u8 = 0x16;
    pub const UTC_TIME: u8 = 0x17;
    pub const GENERALIZED_TIME: u8 = 0x18;
    pub const BMP_STRING: u8 = 0x1e;
    pub const SEQUENCE: u8 = 0x30;
    pub const SET: u8 = 0x31;

    /// Constructed context-specific tag `[n]`.
    pub const fn explicit(n: u8) -> u8 {
        0xa0 | n
    }

    /// Primitive context-specific tag `[n]`.
    pub const fn implicit(n: u8) -> u8 {
        0x80 | n
    }
}

pub(crate) fn malformed(msg: impl Into<String>) -> CodecError {
    CodecError::MalformedDer(msg.into())
}

/// One decoded tag-length-value element, borrowing from the input.
#[derive(Clone, Copy, Debug)]
pub struct Tlv<'a> {
    pub tag: u8,
    pub value: &'a [u8],
    /// Header and value together, exactly as they appeared in the input.
    pub raw: &'a [u8],
}

impl<'a> Tlv<'a> {
    pub fn reader(&self) -> Reader<'a> {
        Reader::new(self.value)
    }
}

/// Sequential reader over concatenated DER elements.
#[derive(Clone, Debug)]
pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.pos >= self.data.len()
    }

    pub fn peek_tag(&self) -> Option<u8> {
        self.data.get(self.pos).copied()
    }

    pub fn read_any(&mut self) -> Result<Tlv<'a>, CodecError> {
        let start = self.pos;
        let rest = &self.data[start..];
        let (&tag, after_tag) = rest
            .split_first()
            .ok_or_else(|| malformed("unexpected end of data"))?;
        if tag & 0x1f == 0x1f {
            return Err(malformed("multi-byte tags are not supported"));
        }
        let (&first, mut body) = after_tag
            .split_first()
            .ok_or_else(|| malformed("truncated length"))?;
        let len = match first {
            0..=0x7f => first as usize,
            0x80 => return Err(malformed("indefinite length")),
            _ => {
                let n = (first & 0x7f) as usize;
                if n > 4 {
                    return Err(malformed("length too long"));
                }
                if body.len() < n {
                    return Err(malformed("truncated length"));
                }
                let (bytes, tail) = body.split_at(n);
                if bytes[0] == 0 {
                    return Err(malformed("non-minimal length"));
                }
                let len = bytes.iter().fold(0usize, |acc, &b| (acc << 8) | b as usize);
                if len < 0x80 {
                    return Err(malformed("non-minimal length"));
                }
                body = tail;
                len
            }
        };
        if body.len() < len {
            return Err(malformed(format!(
                "truncated value: need {len} bytes, have {}",
                body.len()
            )));
        }
        let header = rest.len() - body.len();
        self.pos = start + header + len;
        Ok(Tlv {
            tag,
            value: &body[..len],
            raw: &self.data[start..self.pos],
        })
    }

    pub fn read(&mut self, expected: u8) -> Result<Tlv<'a>, CodecError> {
        match self.peek_tag() {
            Some(t) if t == expected => self.read_any(),
            Some(t) => Err(malformed(format!(
                "expected tag 0x{expected:02x}, found 0x{t:02x}"
            ))),
            None => Err(malformed(format!(
                "expected tag 0x{expected:02x}, found end of data"
            ))),
        }
    }

    pub fn read_optional(&mut self, expected: u8) -> Result<Option<Tlv<'a>>, CodecError> {
        if self.peek_tag() == Some(expected) {
            self.read_any().map(Some)
        } else {
            Ok(None)
        }
    }

    /// Errors if anything is left unread.
    pub fn finish(&self) -> Result<(), CodecError> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(malformed(format!(
                "{} trailing bytes",
                self.data.len() - self.pos
            )))
        }
    }

    pub fn read_sequence(&mut self) -> Result<Reader<'a>, CodecError> {
        Ok(self.read(tag::SEQUENCE)?.reader())
    }

    pub fn read_oid(&mut self) -> Result<Oid, CodecError> {
        let tlv = self.read(tag::OID)?;
        Oid::from_content(tlv.value)
    }

    pub fn read_octet_string(&mut self) -> Result<&'a [u8], CodecError> {
        Ok(self.read(tag::OCTET_STRING)?.value)
    }

    /// Reads a BIT STRING whose unused-bits count must be zero.
    pub fn read_bit_string(&mut self) -> Result<&'a [u8], CodecError> {
        let tlv = self.read(tag::BIT_STRING)?;
        bit_string_bytes(tlv.value)
    }

    pub fn read_unsigned(&mut self) -> Result<BigUint, CodecError> {
        let tlv = self.read(tag::INTEGER)?;
        parse_unsigned(tlv.value)
    }

    pub fn read_small_unsigned(&mut self) -> Result<u64, CodecError> {
        let tlv = self.read(tag::INTEGER)?;
        parse_small_unsigned(tlv.value)
    }

    pub fn read_enumerated(&mut self) -> Result<u64, CodecError> {
        let tlv = self.read(tag::ENUMERATED)?;
        parse_small_unsigned(tlv.value)
    }

    pub fn read_boolean(&mut self) -> Result<bool, CodecError> {
        let tlv = self.read(tag::BOOLEAN)?;
        match tlv.value {
            [0x00] => Ok(false),
            [0xff] => Ok(true),
            _ => Err(malformed("invalid BOOLEAN")),
        }
    }
}

pub fn bit_string_bytes(value: &[u8]) -> Result<&[u8], CodecError> {
    match value.split_first() {
        Some((0, bits)) => Ok(bits),
        Some(_) => Err(malformed("BIT STRING with unused bits")),
        None => Err(malformed("empty BIT STRING")),
    }
}

fn check_integer(value: &[u8]) -> Result<(), CodecError> {
    match value {
        [] => Err(malformed("empty INTEGER")),
        [0x00, next, ..] if next & 0x80 == 0 => Err(malformed("non-minimal INTEGER")),
        [0xff, next, ..] if next & 0x80 != 0 => Err(malformed("non-minimal INTEGER")),
        _ => Ok(()),
    }
}

/// Decodes a non-negative INTEGER body.
pub fn parse_unsigned(value: &[u8]) -> Result<BigUint, CodecError> {
    check_integer(value)?;
    if value[0] & 0x80 != 0 {
        return Err(malformed("negative INTEGER"));
    }
    Ok(BigUint::from_bytes_be(value))
}

pub fn parse_small_unsigned(value: &[u8]) -> Result<u64, CodecError> {
    let n = parse_unsigned(value)?;
    u64::try_from(&n).map_err(|_| malformed("INTEGER out of range"))
}

/// An object identifier, kept as its DER content octets.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Oid(Vec<u8>);

impl Oid {
    pub fn from_content(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.is_empty() || bytes[bytes.len() - 1] & 0x80 != 0 {
            return Err(malformed("invalid OBJECT IDENTIFIER"));
        }
        Ok(Self(bytes.to_vec()))
    }

    pub fn from_static(bytes: &'static [u8]) -> Self {
        Self(bytes.to_vec())
    }

    pub fn from_dotted(s: &str) -> Option<Self> {
        let arcs: Vec<u64> = s
            .split('.')
            .map(|p| p.parse().ok())
            .collect::<Option<_>>()?;
        if arcs.len() < 2 || arcs[0] > 2 || (arcs[0] < 2 && arcs[1] >= 40) {
            return None;
        }
        let mut out = Vec::new();
        let mut push = |mut v: u64| {
            let mut tmp = vec![(v & 0x7f) as u8];
            v >>= 7;
            while v > 0 {
                tmp.push(0x80 | (v & 0x7f) as u8);
                v >>= 7;
            }
            out.extend(tmp.iter().rev());
        };
        push(arcs[0] * 40 + arcs[1]);
        for &arc in &arcs[2..] {
            push(arc);
        }
        Some(Self(out))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_dotted(&self) -> String {
        let mut arcs = Vec::new();
        let mut acc: u64 = 0;
        for &b in &self.0 {
            acc = (acc << 7) | u64::from(b & 0x7f);
            if b & 0x80 == 0 {
                arcs.push(acc);
                acc = 0;
            }
        }
        let mut parts = Vec::with_capacity(arcs.len() + 1);
        if let Some(&first) = arcs.first() {
            let (a, b) = match first {
                0..=39 => (0, first),
                40..=79 => (1, first - 40),
                _ => (2, first - 80),
            };
            parts.push(a.to_string());
            parts.push(b.to_string());
        }
        parts.extend(arcs.iter().skip(1).map(u64::to_string));
        parts.join(".")
    }
}

impl PartialEq<&[u8]> for Oid {
    fn eq(&self, other: &&[u8]) -> bool {
        self.0 == *other
    }
}

impl fmt::Display for Oid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_dotted())
    }
}

impl fmt::Debug for Oid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Oid({})", self.to_dotted())
    }
}

/// Well-known OID content octets.
pub mod oid {
    pub const ECDSA_WITH_SHA256: &[u8] = &[0x2a, 0x86, 0x48, 0xce, 0x3d, 0x04, 0x03, 0x02];
    pub const SHA256_WITH_RSA: &[u8] = &[0x2a, 0x86, 0x48, 0x86, 0xf7, 0x0d, 0x01, 0x01, 0x0b];
    pub const RSA_ENCRYPTION: &[u8] = &[0x2a, 0x86, 0x48, 0x86, 0xf7, 0x0d, 0x01, 0x01, 0x01];
    pub const EC_PUBLIC_KEY: &[u8] = &[0x2a, 0x86, 0x48, 0xce, 0x3d, 0x02, 0x01];
    pub const PRIME256V1: &[u8] = &[0x2a, 0x86, 0x48, 0xce, 0x3d, 0x03, 0x01, 0x07];
    pub const SHA1: &[u8] = &[0x2b, 0x0e, 0x03, 0x02, 0x1a];
    pub const SHA256: &[u8] = &[0x60, 0x86, 0x48, 0x01, 0x65, 0x03, 0x04, 0x02, 0x01];

    pub const OCSP_BASIC: &[u8] = &[0x2b, 0x06, 0x01, 0x05, 0x05, 0x07, 0x30, 0x01, 0x01];
    pub const OCSP_NONCE: &[u8] = &[0x2b, 0x06, 0x01, 0x05, 0x05, 0x07, 0x30, 0x01, 0x02];
    pub const AD_OCSP: &[u8] = &[0x2b, 0x06, 0x01, 0x05, 0x05, 0x07, 0x30, 0x01];
    pub const KP_OCSP_SIGNING: &[u8] = &[0x2b, 0x06, 0x01, 0x05, 0x05, 0x07, 0x03, 0x09];

    pub const PE_AUTHORITY_INFO_ACCESS: &[u8] = &[0x2b, 0x06, 0x01, 0x05, 0x05, 0x07, 0x01, 0x01];
    pub const CE_SUBJECT_KEY_ID: &[u8] = &[0x55, 0x1d, 0x0e];
    pub const CE_KEY_USAGE: &[u8] = &[0x55, 0x1d, 0x0f];
    pub const CE_SUBJECT_ALT_NAME: &[u8] = &[0x55, 0x1d, 0x11];
    pub const CE_BASIC_CONSTRAINTS: &[u8] = &[0x55, 0x1d, 0x13];
    pub const CE_CRL_NUMBER: &[u8] = &[0x55, 0x1d, 0x14];
    pub const CE_CRL_REASON: &[u8] = &[0x55, 0x1d, 0x15];
    pub const CE_CRL_DISTRIBUTION_POINTS: &[u8] = &[0x55, 0x1d, 0x1f];
    pub const CE_AUTHORITY_KEY_ID: &[u8] = &[0x55, 0x1d, 0x23];
    pub const CE_EXT_KEY_USAGE: &[u8] = &[0x55, 0x1d, 0x25];

    pub const AT_COMMON_NAME: &[u8] = &[0x55, 0x04, 0x03];
    pub const AT_SERIAL_NUMBER: &[u8] = &[0x55, 0x04, 0x05];
    pub const AT_COUNTRY: &[u8] = &[0x55, 0x04, 0x06];
    pub const AT_LOCALITY: &[u8] = &[0x55, 0x04, 0x07];
    pub const AT_STATE: &[u8] = &[0x55, 0x04, 0x08];
    pub const AT_ORGANIZATION: &[u8] = &[0x55, 0x04, 0x0a];
    pub const AT_ORG_UNIT: &[u8] = &[0x55, 0x04, 0x0b];
}

// ---- writer ----

fn push_len(out: &mut Vec<u8>, len: usize) {
    if len < 0x80 {
        out.push(len as u8);
    } else {
        let bytes = len.to_be_bytes();
        let skip = bytes.iter().take_while(|&&b| b == 0).count();
        out.push(0x80 | (bytes.len() - skip) as u8);
        out.extend_from_slice(&bytes[skip..]);
    }
}

pub fn encode(tag: u8, value: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(value.len() + 6);
    out.push(tag);
    push_len(&mut out, value.len());
    out.extend_from_slice(value);
    out
}

/// Wraps the concatenation of `parts` in a constructed element.
pub fn constructed(tag: u8, parts: &[&[u8]]) -> Vec<u8> {
    let len: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = Vec::with_capacity(len + 6);
    out.push(tag);
    push_len(&mut out, len);
    for p in parts {
        out.extend_from_slice(p);
    }
    out
}

pub fn sequence(parts: &[&[u8]]) -> Vec<u8> {
    constructed(tag::SEQUENCE, parts)
}

pub fn unsigned(n: &BigUint) -> Vec<u8> {
    let mut body = n.to_bytes_be();
    if body[0] & 0x80 != 0 {
        body.insert(0, 0);
    }
    encode(tag::INTEGER, &body)
}

pub fn small_unsigned(n: u64) -> Vec<u8> {
    unsigned(&BigUint::from(n))
}

pub fn enumerated(n: u8) -> Vec<u8> {
    if n & 0x80 != 0 {
        encode(tag::ENUMERATED, &[0, n])
    } else {
        encode(tag::ENUMERATED, &[n])
    }
}

pub fn octet_string(bytes: &[u8]) -> Vec<u8> {
    encode(tag::OCTET_STRING, bytes)
}

pub fn bit_string(bytes: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(bytes.len() + 6);
    out.push(tag::BIT_STRING);
    push_len(&mut out, bytes.len() + 1);
    out.push(0);
    out.extend_from_slice(bytes);
    out
}

pub fn boolean(v: bool) -> Vec<u8> {
    encode(tag::BOOLEAN, &[if v { 0xff } else { 0x00 }])
}

pub fn null() -> Vec<u8> {
    vec![tag::NULL, 0]
}

pub fn oid(content: &[u8]) -> Vec<u8> {
    encode(tag::OID, content)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oid_constants_match_dotted_form() {
        let cases: &[(&[u8], &str)] = &[
            (oid::ECDSA_WITH_SHA256, "1.2.840.10045.4.3.2"),
            (oid::SHA256_WITH_RSA, "1.2.840.113549.1.1.11"),
            (oid::RSA_ENCRYPTION, "1.2.840.113549.1.1.1"),
            (oid::EC_PUBLIC_KEY, "1.2.840.10045.2.1"),
            (oid::PRIME256V1, "1.2.840.10045.3.1.7"),
            (oid::SHA1, "1.3.14.3.2.26"),
            (oid::SHA256, "2.16.840.1.101.3.4.2.1"),
            (oid::OCSP_BASIC, "1.3.6.1.5.5.7.48.1.1"),
            (oid::OCSP_NONCE, "1.3.6.1.5.5.7.48.1.2"),
            (oid::AD_OCSP, "1.3.6.1.5.5.7.48.1"),
            (oid::KP_OCSP_SIGNING, "1.3.6.1.5.5.7.3.9"),
            (oid::PE_AUTHORITY_INFO_ACCESS, "1.3.6.1.5.5.7.1.1"),
            (oid::CE_CRL_DISTRIBUTION_POINTS, "2.5.29.31"),
            (oid::CE_CRL_REASON, "2.5.29.21"),
            (oid::CE_CRL_NUMBER, "2.5.29.20"),
            (oid::CE_EXT_KEY_USAGE, "2.5.29.37"),
            (oid::AT_COMMON_NAME, "2.5.4.3"),
        ];
        for (bytes, dotted) in cases {
            assert_eq!(Oid::from_dotted(dotted).unwrap().as_bytes(), *bytes, "{dotted}");
            assert_eq!(Oid::from_static(bytes).to_dotted(), *dotted);
        }
    }

    #[test]
    fn long_form_lengths_round_trip() {
        for len in [0usize, 1, 127, 128, 255, 256, 65_535, 70_000] {
            let value = vec![0x5a; len];
            let enc = encode(tag::OCTET_STRING, &value);
            let mut r = Reader::new(&enc);
            let tlv = r.read(tag::OCTET_STRING).unwrap();
            assert_eq!(tlv.value.len(), len);
            assert_eq!(tlv.raw, &enc[..]);
            r.finish().unwrap();
        }
    }

    #[test]
    fn rejects_non_minimal_and_indefinite_lengths() {
        assert!(Reader::new(&[0x04, 0x81, 0x05, 1, 2, 3, 4, 5]).read_any().is_err());
        assert!(Reader::new(&[0x30, 0x80, 0, 0]).read_any().is_err());
        assert!(Reader::new(&[0x1f, 0x01, 0x00]).read_any().is_err());
    }

    #[test]
    fn integers_are_minimal_and_unsigned() {
        assert_eq!(parse_small_unsigned(&[0x00, 0x80]).unwrap(), 128);
        assert!(parse_unsigned(&[0x00, 0x7f]).is_err());
        assert!(parse_unsigned(&[0x80]).is_err());
        assert!(parse_unsigned(&[]).is_err());
        let n = BigUint::from(0x80u32);
        assert_eq!(unsigned(&n), vec![0x02, 0x02, 0x00, 0x80]);
    }
}

use std::fmt;
use std::str::FromStr;

use super::CodecError;
use crate::der::{self, oid, tag, Oid, Reader};

/// An X.509 `Name`, held as its exact DER so comparisons and hashes are
/// byte-for-byte.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct DistinguishedName {
    der: Vec<u8>,
}

const ATTRS: &[(&str, &[u8])] = &[
    ("C", oid::AT_COUNTRY),
    ("ST", oid::AT_STATE),
    ("L", oid::AT_LOCALITY),
    ("O", oid::AT_ORGANIZATION),
    ("OU", oid::AT_ORG_UNIT),
    ("CN", oid::AT_COMMON_NAME),
    ("serialNumber", oid::AT_SERIAL_NUMBER),
];

impl DistinguishedName {
    /// Validates that `der` is a well-formed `Name`.
    pub fn from_der(der: &[u8]) -> Result<Self, CodecError> {
        let mut outer = Reader::new(der);
        let mut rdns = outer.read_sequence()?;
        outer.finish()?;
        while !rdns.is_empty() {
            let mut set = rdns.read(tag::SET)?.reader();
            if set.is_empty() {
                return Err(der::malformed("empty RDN"));
            }
            while !set.is_empty() {
                let mut atv = set.read_sequence()?;
                atv.read_oid()?;
                atv.read_any()?;
                atv.finish()?;
            }
        }
        Ok(Self { der: der.to_vec() })
    }

    pub fn as_der(&self) -> &[u8] {
        &self.der
    }

    fn attributes(&self) -> Vec<(Oid, String)> {
        let mut out = Vec::new();
        let Ok(mut rdns) = Reader::new(&self.der).read_sequence() else {
            return out;
        };
        while let Ok(set) = rdns.read(tag::SET) {
            let mut set = set.reader();
            while let Ok(mut atv) = set.read_sequence() {
                let (Ok(id), Ok(value)) = (atv.read_oid(), atv.read_any()) else {
                    break;
                };
                let text = match value.tag {
                    tag::UTF8_STRING | tag::PRINTABLE_STRING | tag::IA5_STRING => {
                        String::from_utf8_lossy(value.value).into_owned()
                    }
                    tag::T61_STRING => value.value.iter().map(|&b| b as char).collect(),
                    tag::BMP_STRING => {
                        let units: Vec<u16> = value
                            .value
                            .chunks(2)
                            .map(|c| u16::from_be_bytes([c[0], *c.get(1).unwrap_or(&0)]))
                            .collect();
                        String::from_utf16_lossy(&units)
                    }
                    _ => format!("#{}", hex(value.raw)),
                };
                out.push((id, text));
            }
        }
        out
    }

    /// First common name, if any.
    pub fn common_name(&self) -> Option<String> {
        self.attributes()
            .into_iter()
            .find(|(id, _)| *id == oid::AT_COMMON_NAME)
            .map(|(_, v)| v)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl FromStr for DistinguishedName {
    type Err = CodecError;

    /// Parses `C=aa, ST=aa, O=aa, CN=rootca` into one attribute per RDN.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut rdns = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| CodecError::InvalidField(format!("bad RDN {part:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let id = ATTRS
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case(key))
                .map(|(_, o)| *o)
                .ok_or_else(|| CodecError::InvalidField(format!("unknown attribute {key:?}")))?;
            let string_tag = if id == oid::AT_COUNTRY || id == oid::AT_SERIAL_NUMBER {
                tag::PRINTABLE_STRING
            } else {
                tag::UTF8_STRING
            };
            let atv = der::sequence(&[&der::oid(id), &der::encode(string_tag, value.as_bytes())]);
            rdns.push(der::constructed(tag::SET, &[&atv]));
        }
        if rdns.is_empty() {
            return Err(CodecError::InvalidField("empty distinguished name".into()));
        }
        let parts: Vec<&[u8]> = rdns.iter().map(Vec::as_slice).collect();
        Ok(Self {
            der: der::sequence(&parts),
        })
    }
}

impl fmt::Display for DistinguishedName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .attributes()
            .into_iter()
            .map(|(id, v)| {
                let key = ATTRS
                    .iter()
                    .find(|(_, o)| id == *o)
                    .map(|(k, _)| (*k).to_string())
                    .unwrap_or_else(|| id.to_dotted());
                format!("{key}={v}")
            })
            .collect();
        f.write_str(&parts.join(", "))
    }
}

impl fmt::Debug for DistinguishedName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DistinguishedName({self})")
    }
}

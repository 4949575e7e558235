//! PEM armor (RFC 7468).

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

use super::CodecError;

pub const CERTIFICATE: &str = "CERTIFICATE";
pub const X509_CRL: &str = "X509 CRL";
pub const OCSP_REQUEST: &str = "OCSP REQUEST";
pub const OCSP_RESPONSE: &str = "OCSP RESPONSE";

pub fn encode(label: &str, der: &[u8]) -> String {
    let b64 = STANDARD.encode(der);
    let mut out = format!("-----BEGIN {label}-----\n");
    for chunk in b64.as_bytes().chunks(64) {
        out.push_str(std::str::from_utf8(chunk).expect("base64 is ascii"));
        out.push('\n');
    }
    out.push_str(&format!("-----END {label}-----\n"));
    out
}

/// Every block in `text`, in order, as `(label, der)`.
pub fn decode_all(text: &str) -> Result<Vec<(String, Vec<u8>)>, CodecError> {
    let mut out = Vec::new();
    let mut lines = text.lines().map(str::trim);
    while let Some(line) = lines.next() {
        let Some(label) = line
            .strip_prefix("-----BEGIN ")
            .and_then(|l| l.strip_suffix("-----"))
        else {
            continue;
        };
        let end = format!("-----END {label}-----");
        let mut body = String::new();
        let mut closed = false;
        for l in lines.by_ref() {
            if l == end {
                closed = true;
                break;
            }
            body.push_str(l);
        }
        if !closed {
            return Err(CodecError::Pem(format!("unterminated {label} block")));
        }
        let der = STANDARD
            .decode(body.as_bytes())
            .map_err(|e| CodecError::Pem(format!("{label}: {e}")))?;
        out.push((label.to_string(), der));
    }
    Ok(out)
}

/// The first block carrying `label`.
pub fn decode(label: &str, text: &str) -> Result<Vec<u8>, CodecError> {
    decode_all(text)?
        .into_iter()
        .find(|(l, _)| l == label)
        .map(|(_, der)| der)
        .ok_or_else(|| CodecError::Pem(format!("no {label} block found")))
}

pub fn looks_like_pem(bytes: &[u8]) -> bool {
    let head = &bytes[..bytes.len().min(256)];
    head.windows(11).any(|w| w == b"-----BEGIN ")
}

/// Accepts DER, or PEM carrying `label`.
pub fn der_or_pem(label: &str, bytes: &[u8]) -> Result<Vec<u8>, CodecError> {
    if looks_like_pem(bytes) {
        let text = std::str::from_utf8(bytes).map_err(|e| CodecError::Pem(e.to_string()))?;
        decode(label, text)
    } else {
        Ok(bytes.to_vec())
    }
}

//! UTC timestamps at one-second resolution and their DER forms.

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, TimeZone, Timelike, Utc};

use super::CodecError;
use crate::der::{self, tag, Tlv};

pub type Timestamp = DateTime<Utc>;

/// Drops sub-second precision.
pub fn truncate(ts: Timestamp) -> Timestamp {
    ts.with_nanosecond(0).unwrap_or(ts)
}

pub fn from_unix(secs: i64) -> Timestamp {
    Utc.timestamp_opt(secs, 0).single().unwrap_or_default()
}

/// GeneralizedTime `YYYYMMDDHHMMSSZ`, never with fractional seconds.
pub fn encode_generalized(ts: Timestamp) -> Vec<u8> {
    let s = truncate(ts).format("%Y%m%d%H%M%SZ").to_string();
    der::encode(tag::GENERALIZED_TIME, s.as_bytes())
}

/// X.509 `Time`: UTCTime through 2049, GeneralizedTime afterwards.
pub fn encode_x509(ts: Timestamp) -> Vec<u8> {
    let ts = truncate(ts);
    if (1950..2050).contains(&ts.year()) {
        let s = ts.format("%y%m%d%H%M%SZ").to_string();
        der::encode(tag::UTC_TIME, s.as_bytes())
    } else {
        encode_generalized(ts)
    }
}

fn digits(s: &[u8]) -> Result<u32, CodecError> {
    s.iter().try_fold(0u32, |acc, &c| {
        if c.is_ascii_digit() {
            Ok(acc * 10 + u32::from(c - b'0'))
        } else {
            Err(der::malformed("non-digit in time"))
        }
    })
}

fn build(y: i32, mo: u32, d: u32, h: u32, mi: u32, s: u32) -> Result<Timestamp, CodecError> {
    NaiveDate::from_ymd_opt(y, mo, d)
        .and_then(|date| date.and_hms_opt(h, mi, s))
        .map(|naive| Utc.from_utc_datetime(&naive))
        .ok_or_else(|| der::malformed("time out of range"))
}

/// Decodes either UTCTime or GeneralizedTime. Fractional seconds are
/// accepted on input and discarded.
pub fn decode(tlv: &Tlv<'_>) -> Result<Timestamp, CodecError> {
    let v = tlv.value;
    match tlv.tag {
        tag::UTC_TIME => {
            if v.len() != 13 || v[12] != b'Z' {
                return Err(der::malformed("UTCTime must be YYMMDDHHMMSSZ"));
            }
            let yy = digits(&v[0..2])? as i32;
            let year = if yy >= 50 { 1900 + yy } else { 2000 + yy };
            build(
                year,
                digits(&v[2..4])?,
                digits(&v[4..6])?,
                digits(&v[6..8])?,
                digits(&v[8..10])?,
                digits(&v[10..12])?,
            )
        }
        tag::GENERALIZED_TIME => {
            if v.len() < 15 || v[v.len() - 1] != b'Z' {
                return Err(der::malformed("GeneralizedTime must end in Z"));
            }
            let frac = &v[14..v.len() - 1];
            if !frac.is_empty()
                && (frac[0] != b'.' || frac.len() < 2 || !frac[1..].iter().all(u8::is_ascii_digit))
            {
                return Err(der::malformed("bad GeneralizedTime fraction"));
            }
            build(
                digits(&v[0..4])? as i32,
                digits(&v[4..6])?,
                digits(&v[6..8])?,
                digits(&v[8..10])?,
                digits(&v[10..12])?,
                digits(&v[12..14])?,
            )
        }
        other => Err(der::malformed(format!("expected a time, found tag 0x{other:02x}"))),
    }
}

/// `YYYY-MM-DD HH:MM:SS`, the column format of the staple store.
pub fn format_sql(ts: Timestamp) -> String {
    ts.format("%Y-%m-%d %H:%M:%S").to_string()
}

pub fn parse_sql(s: &str) -> Result<Timestamp, CodecError> {
    NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S")
        .map(|naive| Utc.from_utc_datetime(&naive))
        .map_err(|e| CodecError::InvalidField(format!("timestamp {s:?}: {e}")))
}

/// OpenSSL-style `May  4 19:57:27 2023 GMT`.
pub fn format_openssl(ts: Timestamp) -> String {
    ts.format("%b %e %H:%M:%S %Y GMT").to_string()
}

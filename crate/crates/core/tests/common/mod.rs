#![allow(dead_code)]

use std::path::PathBuf;

use chrono::{NaiveDateTime, TimeZone, Utc};
use staplegrid_core::Timestamp;

pub fn fixture(name: &str) -> Vec<u8> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/openssl")
        .join(name);
    std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn fixture_text(name: &str) -> String {
    String::from_utf8(fixture(name)).unwrap()
}

/// Values following `label` on every matching line of an OpenSSL text dump.
pub fn dump_values(text: &str, label: &str) -> Vec<String> {
    text.lines()
        .filter_map(|l| l.trim().strip_prefix(label))
        .map(|v| v.trim().to_string())
        .collect()
}

pub fn unhex(s: &str) -> Vec<u8> {
    let s: String = s.chars().filter(|c| c.is_ascii_hexdigit()).collect();
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap())
        .collect()
}

/// Parses OpenSSL's `May  4 19:57:27 2023 GMT`.
pub fn openssl_time(s: &str) -> Timestamp {
    let squeezed = s.split_whitespace().collect::<Vec<_>>().join(" ");
    let naive = NaiveDateTime::parse_from_str(&squeezed, "%b %d %H:%M:%S %Y GMT")
        .unwrap_or_else(|e| panic!("{s:?}: {e}"));
    Utc.from_utc_datetime(&naive)
}

pub fn ts(y: i32, mo: u32, d: u32, h: u32, mi: u32, s: u32) -> Timestamp {
    Utc.with_ymd_and_hms(y, mo, d, h, mi, s).unwrap()
}

use std::sync::Arc;

use staplegrid_core::codec::CertMeta;
use staplegrid_core::responder::{CrlSource, Responder, ResponderConfig, SharedCrl};
use staplegrid_core::{generate_root, AuthorityState, CertProfile, ManualClock, RevocationReason};

pub const FLEET_URL: &str = "http://ocsp.test.invalid/ocsp";

/// A CA, an in-process CRL publication point and a responder reading it.
pub struct Fleet {
    pub ca: AuthorityState,
    pub crl: SharedCrl,
    pub clock: ManualClock,
    pub responder: Arc<Responder>,
}

impl Fleet {
    pub fn new(seed: u64) -> Self {
        Self::with(seed, |_| {})
    }

    pub fn with(seed: u64, tweak: impl FnOnce(&mut ResponderConfig)) -> Self {
        let start = ts(2024, 6, 19, 9, 0, 0);
        let ca = generate_root(&"O=Fleet, CN=Fleet Root".parse().unwrap(), start, Some(seed))
            .unwrap();
        let crl = SharedCrl::new();
        let mut config = ResponderConfig::new(
            ca.root_cert().clone(),
            Arc::new(ca.root_key().clone()),
            CrlSource::Shared(crl.clone()),
        );
        config.listen_address = "127.0.0.1:0".into();
        tweak(&mut config);
        let clock = ManualClock::new(start);
        let responder = Arc::new(Responder::with_clock(config, Arc::new(clock.clone())));
        let mut fleet = Self {
            ca,
            crl,
            clock,
            responder,
        };
        fleet.publish();
        fleet
    }

    pub fn now(&self) -> Timestamp {
        use staplegrid_core::Clock;
        self.clock.now()
    }

    pub fn root(&self) -> &CertMeta {
        self.ca.root_cert()
    }

    pub fn issue(&mut self, cn: &str) -> CertMeta {
        let profile = CertProfile::new(format!("O=Fleet, CN={cn}").parse().unwrap()).aia(FLEET_URL);
        self.ca.issue_cert(&profile, self.now()).unwrap()
    }

    /// Emits a CRL, publishes it and reloads the responder.
    pub fn publish(&mut self) {
        let crl = self.ca.emit_crl(self.now()).unwrap();
        self.crl.publish(crl.raw);
        self.responder.refresh().unwrap();
    }

    pub fn revoke(&mut self, cert: &CertMeta, reason: RevocationReason) {
        self.ca.revoke(&cert.serial_number, reason, self.now()).unwrap();
        self.publish();
    }
}

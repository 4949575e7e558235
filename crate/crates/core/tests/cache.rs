//! Staple cache: dedup, verification before persistence, the 7-day
//! maintenance rule, recovery and export.

mod common;

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Barrier, Mutex};

use chrono::Duration;
use common::Fleet;
use proptest::prelude::*;
use staplegrid_core::cache::{quarantine_path, CacheEntry, CacheError, StapleCache};
use staplegrid_core::codec::{
    decode_ocsp_request, decode_ocsp_response, encode_ocsp_error, verify_ocsp_signature,
    ResponderId,
};
use staplegrid_core::transport::{CountingTransport, OcspTransport, TransportError};
use staplegrid_core::{
    AuthorityState, CertMeta, CertProfile, CertStatus, ResponseStatus, RevocationReason,
    SerialNumber, Timestamp,
};

fn cache_for(fleet: &Fleet) -> StapleCache {
    StapleCache::in_memory(vec![fleet.root().clone()])
}

fn fetch(
    cache: &StapleCache,
    fleet: &Fleet,
    cert: &CertMeta,
    t: &dyn OcspTransport,
) -> Result<CacheEntry, CacheError> {
    cache.lookup_or_fetch(&cert.raw_der, &fleet.root().raw_der, fleet.now(), t)
}

/// Columns must agree with the stored blob, which must verify.
fn check_row(row: &CacheEntry, anchors: &[CertMeta], now: Timestamp) {
    let resp = decode_ocsp_response(&row.ocsp_response).unwrap();
    let v = verify_ocsp_signature(&resp, anchors, now).unwrap();
    let single = &v.single_responses()[0];
    assert_eq!(single.status.label(), row.cert_status);
    assert_eq!(
        single.next_update.unwrap().format("%Y-%m-%d %H:%M:%S").to_string(),
        row.next_update
    );
    assert_eq!(single.cert_id.serial_number.to_decimal(), row.serial_number);
    let cert = staplegrid_core::codec::load_certificate(&row.certificate).unwrap();
    assert_eq!(cert.serial_number.to_decimal(), row.serial_number);
}

#[test]
fn second_lookup_is_served_locally() {
    let mut fleet = Fleet::new(21);
    let cert = fleet.issue("m");
    let cache = cache_for(&fleet);
    let upstream = CountingTransport::new(fleet.responder.clone());

    let first = fetch(&cache, &fleet, &cert, &upstream).unwrap();
    assert_eq!(upstream.calls(), 1);
    let second = fetch(&cache, &fleet, &cert, &upstream).unwrap();
    assert_eq!(upstream.calls(), 1);
    assert_eq!(first, second);
    assert_eq!(cache.len(), 1);
    assert_eq!(first.cert_status, "GOOD");
    assert_eq!(first.serial_number, cert.serial_number.to_decimal());
    assert_eq!(first.ocsp_url, common::FLEET_URL);
    check_row(&first, cache.anchors(), fleet.now());

    // Upstream down: cached rows still come back.
    upstream.set_down(true);
    assert_eq!(fetch(&cache, &fleet, &cert, &upstream).unwrap(), first);
}

#[test]
fn fetch_requests_carry_no_nonce() {
    let mut fleet = Fleet::new(22);
    let cert = fleet.issue("m");
    let seen = Arc::new(Mutex::new(Vec::new()));
    let responder = fleet.responder.clone();
    let log = seen.clone();
    let upstream = move |url: &str, body: &[u8]| {
        log.lock().unwrap().push((url.to_string(), decode_ocsp_request(body).unwrap()));
        responder.post(url, body)
    };
    fetch(&cache_for(&fleet), &fleet, &cert, &upstream).unwrap();
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].0, common::FLEET_URL);
    assert_eq!(seen[0].1.nonce, None);
    assert_eq!(seen[0].1.cert_ids.len(), 1);
}

#[test]
fn revoked_status_is_stored_and_agrees() {
    let mut fleet = Fleet::new(23);
    let cert = fleet.issue("m");
    fleet.revoke(&cert, RevocationReason::KeyCompromise);
    let cache = cache_for(&fleet);
    let row = fetch(&cache, &fleet, &cert, &fleet.responder.clone()).unwrap();
    assert_eq!(row.cert_status, "REVOKED");
    check_row(&row, cache.anchors(), fleet.now());
}

#[test]
fn failures_leave_the_table_unchanged() {
    let mut fleet = Fleet::new(24);
    let cache = cache_for(&fleet);

    let no_aia = fleet
        .ca
        .issue_cert(&CertProfile::new("CN=no-aia".parse().unwrap()), fleet.now())
        .unwrap();
    let upstream = CountingTransport::new(fleet.responder.clone());
    assert!(matches!(
        fetch(&cache, &fleet, &no_aia, &upstream),
        Err(CacheError::NoOcspUrl)
    ));
    assert_eq!(upstream.calls(), 0);

    let cert = fleet.issue("m");
    upstream.set_down(true);
    assert!(matches!(
        fetch(&cache, &fleet, &cert, &upstream),
        Err(CacheError::UpstreamUnreachable(_))
    ));
    let try_later = |_: &str, _: &[u8]| Ok(encode_ocsp_error(ResponseStatus::TryLater));
    assert!(matches!(
        fetch(&cache, &fleet, &cert, &try_later),
        Err(CacheError::UpstreamError(ResponseStatus::TryLater))
    ));
    let http_500 = |_: &str, _: &[u8]| Err(TransportError::HttpStatus(500));
    assert!(matches!(
        fetch(&cache, &fleet, &cert, &http_500),
        Err(CacheError::UpstreamUnreachable(_))
    ));

    // Signed by a key nobody trusts.
    let rogue_ca = Fleet::new(124);
    let rogue = rogue_ca.responder.clone();
    assert!(matches!(
        fetch(&cache, &fleet, &cert, &rogue),
        Err(CacheError::SignatureInvalid(_))
    ));

    // Correctly signed, but about some other certificate.
    let other = fleet.issue("other");
    let responder = fleet.responder.clone();
    let other_der = other.raw_der.clone();
    let root_der = fleet.root().raw_der.clone();
    let swapped = move |url: &str, _: &[u8]| {
        let id = staplegrid_core::codec::compute_cert_id(
            &staplegrid_core::codec::load_certificate(&other_der).unwrap(),
            &root_der,
            staplegrid_core::HashAlg::Sha1,
        )
        .unwrap();
        let body = staplegrid_core::codec::encode_ocsp_request(&staplegrid_core::OcspRequest::single(id))
            .unwrap();
        responder.post(url, &body)
    };
    assert!(matches!(
        fetch(&cache, &fleet, &cert, &swapped),
        Err(CacheError::ResponseMismatch)
    ));
    assert!(cache.is_empty());
}

#[test]
fn simultaneous_first_lookups_make_one_row() {
    let mut fleet = Fleet::new(25);
    let cache = Arc::new(cache_for(&fleet));
    let responder = fleet.responder.clone();
    let upstream = Arc::new(CountingTransport::new(move |url: &str, body: &[u8]| {
        std::thread::sleep(std::time::Duration::from_millis(50));
        responder.post(url, body)
    }));
    for threads in [2usize, 8] {
        let cert = fleet.issue(&format!("m{threads}"));
        upstream.reset();
        let barrier = Arc::new(Barrier::new(threads));
        let handles: Vec<_> = (0..threads)
            .map(|_| {
                let (cache, upstream, barrier) = (cache.clone(), upstream.clone(), barrier.clone());
                let (der, root) = (cert.raw_der.clone(), fleet.root().raw_der.clone());
                let now = fleet.now();
                std::thread::spawn(move || {
                    barrier.wait();
                    cache.lookup_or_fetch(&der, &root, now, &upstream).unwrap()
                })
            })
            .collect();
        let rows: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        assert!(rows.iter().all(|r| *r == rows[0]));
        assert_eq!(cache.len(), if threads == 2 { 1 } else { 2 });
        assert_eq!(cache.entries().iter().filter(|r| *r == &rows[0]).count(), 1);
        assert!(upstream.calls() >= 1 && upstream.calls() <= threads);
        if threads == 2 {
            assert!(upstream.calls() <= 2, "{} upstream calls", upstream.calls());
        }
    }
}

#[test]
fn staples_are_byte_identical_and_flag_staleness() {
    let mut fleet = Fleet::new(26);
    let cert = fleet.issue("m");
    let cache = cache_for(&fleet);
    let fetched = Arc::new(Mutex::new(Vec::new()));
    let responder = fleet.responder.clone();
    let log = fetched.clone();
    let upstream = move |url: &str, body: &[u8]| {
        let r = responder.post(url, body)?;
        log.lock().unwrap().push(r.clone());
        Ok(r)
    };
    fetch(&cache, &fleet, &cert, &upstream).unwrap();

    let staple = cache.get_staple(&cert.serial_number, fleet.now()).unwrap();
    assert_eq!(staple.der, fetched.lock().unwrap()[0]);
    assert!(!staple.stale);
    let resp = decode_ocsp_response(&staple.der).unwrap();
    verify_ocsp_signature(&resp, &[fleet.root().clone()], fleet.now()).unwrap();

    let expiry = fleet.now() + Duration::days(7);
    assert!(!cache.get_staple(&cert.serial_number, expiry - Duration::seconds(1)).unwrap().stale);
    let late = cache.get_staple(&cert.serial_number, expiry).unwrap();
    assert!(late.stale);
    assert_eq!(late.der, staple.der);

    let unknown = SerialNumber::from_u128(424242).unwrap();
    assert!(matches!(
        cache.get_staple(&unknown, fleet.now()),
        Err(CacheError::NotCached(s)) if s == "424242"
    ));
}

/// An upstream whose answers carry a per-serial validity window.
struct ScriptedUpstream {
    ca: AuthorityState,
    windows: Mutex<HashMap<SerialNumber, (Timestamp, Timestamp)>>,
    calls: Mutex<usize>,
}

impl ScriptedUpstream {
    fn new(ca: AuthorityState) -> Self {
        Self {
            ca,
            windows: Mutex::new(HashMap::new()),
            calls: Mutex::new(0),
        }
    }

    fn set(&self, serial: &SerialNumber, this: Timestamp, next: Timestamp) {
        self.windows.lock().unwrap().insert(serial.clone(), (this, next));
    }
}

impl OcspTransport for ScriptedUpstream {
    fn post(&self, _url: &str, body: &[u8]) -> Result<Vec<u8>, TransportError> {
        *self.calls.lock().unwrap() += 1;
        let req = decode_ocsp_request(body).unwrap();
        let id = &req.cert_ids[0];
        let (this, next) = self.windows.lock().unwrap()[&id.serial_number];
        let resp = self
            .ca
            .sign_ocsp_response_with(
                self.ca.root_key(),
                ResponderId::ByName(self.ca.root_cert().subject_dn.clone()),
                &[],
                id,
                CertStatus::Good,
                this,
                next,
                None,
            )
            .unwrap();
        Ok(resp.raw_der)
    }
}

/// Fills a cache with one row per offset, each expiring `offset` after `now`.
fn rows_expiring_in(
    fleet: &mut Fleet,
    offsets: &[Duration],
) -> (StapleCache, ScriptedUpstream, Vec<i64>) {
    let now = fleet.now();
    let cache = cache_for(fleet);
    let upstream = ScriptedUpstream::new(fleet.ca.clone());
    let mut ids = Vec::new();
    for (i, off) in offsets.iter().enumerate() {
        let cert = fleet.issue(&format!("m{i}"));
        let this = (now + *off).min(now) - Duration::days(1);
        upstream.set(&cert.serial_number, this, now + *off);
        let row = fetch(&cache, fleet, &cert, &upstream).unwrap();
        upstream.set(&cert.serial_number, now, now + Duration::days(7));
        ids.push(row.id);
    }
    (cache, upstream, ids)
}

#[test]
fn maintenance_follows_the_seven_day_rule() {
    let mut fleet = Fleet::new(27);
    let now = fleet.now();
    let offsets = [
        Duration::hours(12),
        Duration::days(3),
        Duration::days(6) + Duration::hours(23),
        -Duration::hours(2),
        Duration::days(7) + Duration::hours(1),
        Duration::days(30),
        Duration::days(7),
    ];
    let (cache, upstream, ids) = rows_expiring_in(&mut fleet, &offsets);
    let before: Vec<_> = cache.entries();

    let report = cache.maintain(now, &upstream).unwrap();
    assert!(report.is_partition());
    assert_eq!(report.checked, 7);
    assert_eq!(report.updated, ids[..4].to_vec());
    assert_eq!(report.skipped, ids[4..].to_vec());
    assert!(report.failed.is_empty());
    for (old, new) in before.iter().zip(cache.entries()) {
        if report.updated.contains(&old.id) {
            assert_ne!(old.ocsp_response, new.ocsp_response);
            assert_eq!(new.next_update, (now + Duration::days(7)).format("%Y-%m-%d %H:%M:%S").to_string());
        } else {
            assert_eq!(*old, new);
        }
        check_row(&new, cache.anchors(), now);
    }

    // The refreshed rows now expire exactly seven days out.
    let again = cache.maintain(now, &upstream).unwrap();
    assert!(again.updated.is_empty());
    assert_eq!(again.skipped, ids);
}

#[test]
fn maintenance_failures_keep_old_rows() {
    let mut fleet = Fleet::new(28);
    let now = fleet.now();
    let (cache, _upstream, ids) =
        rows_expiring_in(&mut fleet, &[Duration::days(1), Duration::days(20)]);
    let before = cache.entries();
    let down = |_: &str, _: &[u8]| Err(TransportError::Unreachable("down".into()));
    let report = cache.maintain(now, &down).unwrap();
    assert!(report.is_partition());
    assert_eq!(report.failed.len(), 1);
    assert_eq!(report.failed[0].0, ids[0]);
    assert_eq!(report.skipped, vec![ids[1]]);
    assert_eq!(cache.entries(), before);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn maintenance_partition_is_the_predicate(
        minutes in prop::collection::vec(-3_000i64..30 * 1440, 1..8),
        seed in 0u64..1000,
    ) {
        let mut fleet = Fleet::new(1000 + seed);
        let now = fleet.now();
        let offsets: Vec<Duration> = minutes.iter().map(|m| Duration::minutes(*m)).collect();
        let (cache, upstream, ids) = rows_expiring_in(&mut fleet, &offsets);
        let report = cache.maintain(now, &upstream).unwrap();
        prop_assert!(report.is_partition());
        for (id, off) in ids.iter().zip(&offsets) {
            let due = *off < Duration::days(7);
            prop_assert_eq!(report.updated.contains(id), due);
            prop_assert_eq!(report.skipped.contains(id), !due);
        }
        let serials: HashSet<_> = cache.entries().into_iter().map(|r| r.serial_number).collect();
        prop_assert_eq!(serials.len(), cache.len());
    }
}

#[test]
fn recovery_quarantines_one_damaged_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("staples.db");
    let mut fleet = Fleet::new(29);
    let anchors = vec![fleet.root().clone()];
    let upstream = fleet.responder.clone();
    let mut certs = Vec::new();
    {
        let cache = StapleCache::open(&path, anchors.clone()).unwrap();
        assert!(cache.is_empty());
        for i in 0..100 {
            let cert = fleet.issue(&format!("meter-{i:03}"));
            fetch(&cache, &fleet, &cert, &upstream).unwrap();
            certs.push(cert);
        }
    }
    let clean = StapleCache::open(&path, anchors.clone()).unwrap();
    assert_eq!(clean.len(), 100);
    assert_eq!(clean.quarantined(), 0);
    let rows = clean.entries();
    drop(clean);

    // Flip one byte inside the 50th certificate blob.
    let mut bytes = std::fs::read(&path).unwrap();
    let target = &certs[49].raw_der;
    let at = bytes
        .windows(target.len())
        .position(|w| w == target.as_slice())
        .unwrap();
    bytes[at + target.len() / 2] ^= 0xFF;
    std::fs::write(&path, &bytes).unwrap();

    let recovered = StapleCache::recover(&path, anchors.clone()).unwrap();
    assert_eq!(recovered.len(), 99);
    assert_eq!(recovered.quarantined(), 1);
    assert!(recovered.entry(&certs[49].serial_number).is_none());
    let survivors: Vec<_> = rows.iter().filter(|r| r.serial_number != certs[49].serial_number.to_decimal()).cloned().collect();
    assert_eq!(recovered.entries(), survivors);
    for row in recovered.entries() {
        check_row(&row, &anchors, fleet.now());
    }
    let sidecar = std::fs::read(quarantine_path(&path)).unwrap();
    assert!(sidecar.len() > target.len());
    drop(recovered);

    // The store was rewritten clean; reopening quarantines nothing more.
    let again = StapleCache::open(&path, anchors.clone()).unwrap();
    assert_eq!((again.len(), again.quarantined()), (99, 0));

    // New ids never reuse an old one.
    let cert = fleet.issue("late");
    let row = fetch(&again, &fleet, &cert, &upstream).unwrap();
    assert_eq!(row.id, 101);

    std::fs::write(&path, b"SGOC\x09junk").unwrap();
    assert!(matches!(
        StapleCache::open(&path, anchors),
        Err(CacheError::StoreCorrupt(_))
    ));
}

#[test]
fn export_lists_every_row() {
    let mut fleet = Fleet::new(30);
    let cache = cache_for(&fleet);
    assert_eq!(cache.export_table(), "ocsp_responses: 0 rows\n");
    let upstream = fleet.responder.clone();
    for i in 0..3 {
        let cert = fleet.issue(&format!("m{i}"));
        fetch(&cache, &fleet, &cert, &upstream).unwrap();
    }
    let text = cache.export_table();
    assert!(text.starts_with("ocsp_responses: 3 rows\n"));
    assert_eq!(text.matches("cert_status: GOOD").count(), 3);
    let next: Vec<&str> = text
        .lines()
        .filter_map(|l| l.strip_prefix("next_update: "))
        .collect();
    assert_eq!(next.len(), 3);
    for n in next {
        chrono::NaiveDateTime::parse_from_str(n, "%Y-%m-%d %H:%M:%S").unwrap();
        assert_eq!(n.len(), 19);
    }
    for field in ["id: ", "serial_number: ", "ocsp_url: ", "ocsp_response: 30", "certificate: 30", "issuer_certificate: 30"] {
        assert_eq!(text.lines().filter(|l| l.starts_with(field)).count(), 3, "{field}");
    }
}

#[test]
fn signature_check_uses_configured_anchors_only() {
    let mut fleet = Fleet::new(31);
    let cert = fleet.issue("m");
    let other = Fleet::new(32);
    let cache = StapleCache::in_memory(vec![other.root().clone()]);
    assert!(matches!(
        fetch(&cache, &fleet, &cert, &fleet.responder.clone()),
        Err(CacheError::SignatureInvalid(_))
    ));
}

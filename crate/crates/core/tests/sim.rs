//! Handshake verification, scenario accounting and the replay attack.

mod common;

use chrono::Duration;
use common::Fleet;
use proptest::prelude::*;
use staplegrid_core::cache::{CacheError, StapleCache};
use staplegrid_core::codec::{encode_ocsp_error, CertId, ResponderId};
use staplegrid_core::sim::{
    client_prepare_bundle, parse_fault, parse_script, replay_attack_scenario, run_scenario,
    run_script, server_verify_bundle, server_verify_direct, Mode, RejectReason, ReplayConfig,
    ScenarioConfig, SimError, StapleBundle, TrustStore, Verdict, World, CLOCK_SKEW,
};
use staplegrid_core::transport::{CountingTransport, TransportError};
use staplegrid_core::{CertMeta, CertStatus, HashAlg, ResponseStatus, RevocationReason, Timestamp};

fn trust(fleet: &Fleet) -> TrustStore {
    TrustStore::new(vec![fleet.root().clone()])
}

fn bundle(cert: &CertMeta, chain: &CertMeta, staple: Option<Vec<u8>>) -> StapleBundle {
    StapleBundle {
        client_cert: cert.raw_der.clone(),
        issuer_chain: vec![chain.raw_der.clone()],
        stapled_response: staple,
    }
}

fn staple(
    fleet: &Fleet,
    cert: &CertMeta,
    status: CertStatus,
    this: Timestamp,
    next: Timestamp,
) -> Vec<u8> {
    let id = CertId::for_issuer(fleet.root(), cert.serial_number.clone(), HashAlg::Sha1);
    fleet
        .ca
        .sign_ocsp_response(&id, status, this, next, None)
        .unwrap()
        .raw_der
}

fn reject(r: RejectReason) -> Verdict {
    Verdict::Reject(r)
}

/// One bundle per subset of the five checks. Only the all-pass bundle may be
/// accepted, and a rejection names the first failed check.
#[test]
fn thirty_two_bundles_one_accept() {
    let mut fleet = Fleet::new(41);
    let outsider = Fleet::new(42);
    let leaf = fleet.issue("leaf");
    let other = fleet.issue("other");
    let now = fleet.now() + Duration::days(1);
    let trust = trust(&fleet);
    let order = [
        RejectReason::ChainInvalid,
        RejectReason::SignatureInvalid,
        RejectReason::CertIdMismatch,
        RejectReason::RevokedStatus,
        RejectReason::StaleResponse,
    ];

    let mut accepts = 0;
    for mask in 0u8..32 {
        let ok = |bit: u8| mask & (1 << bit) == 0;
        let subject = if ok(2) { &leaf } else { &other };
        let (this, next) = if ok(4) {
            (now - Duration::days(1), now + Duration::days(6))
        } else {
            (now - Duration::days(9), now - Duration::days(2))
        };
        let status = if ok(3) {
            CertStatus::Good
        } else {
            CertStatus::Revoked {
                revocation_time: this - Duration::hours(1),
                reason: RevocationReason::KeyCompromise,
            }
        };
        let mut der = staple(&fleet, subject, status, this, next);
        if !ok(1) {
            *der.last_mut().unwrap() ^= 0x01;
        }
        let chain = if ok(0) { fleet.root() } else { outsider.root() };
        let outcome = server_verify_bundle(&bundle(&leaf, chain, Some(der)), &trust, now);
        assert_eq!(outcome.server_ocsp_queries, 0);
        match (0..5).find(|b| !ok(*b)) {
            None => {
                accepts += 1;
                assert_eq!(outcome.verdict, Verdict::Accept);
            }
            Some(first) => assert_eq!(outcome.verdict, reject(order[first as usize]), "mask {mask:05b}"),
        }
    }
    assert_eq!(accepts, 1);
}

#[test]
fn every_reject_reason_is_reachable() {
    let mut fleet = Fleet::new(43);
    let rogue = staplegrid_core::generate_root(
        &"O=Elsewhere, CN=Rogue Root".parse().unwrap(),
        fleet.now(),
        Some(44),
    )
    .unwrap();
    let leaf = fleet.issue("leaf");
    let unknown_cert = fleet.issue("stranger");
    let now = fleet.now();
    let t = trust(&fleet);
    let (this, next) = (now, now + Duration::days(7));
    let verify = |b: StapleBundle| server_verify_bundle(&b, &t, now).verdict;
    let mut seen = Vec::new();

    seen.push(verify(bundle(&leaf, fleet.root(), None)));
    seen.push(verify(bundle(
        &leaf,
        fleet.root(),
        Some(encode_ocsp_error(ResponseStatus::TryLater)),
    )));
    let revoked = CertStatus::Revoked {
        revocation_time: now,
        reason: RevocationReason::Superseded,
    };
    seen.push(verify(bundle(&leaf, fleet.root(), Some(staple(&fleet, &leaf, revoked, this, next)))));
    let unknown = staple(&fleet, &unknown_cert, CertStatus::Unknown, this, next);
    seen.push(verify(bundle(&unknown_cert, fleet.root(), Some(unknown))));
    seen.push(server_verify_bundle(
        &bundle(&leaf, fleet.root(), Some(staple(&fleet, &leaf, CertStatus::Good, this, next))),
        &t,
        next + CLOCK_SKEW + Duration::seconds(1),
    )
    .verdict);
    seen.push(verify(bundle(&leaf, fleet.root(), Some(b"not der".to_vec()))));
    seen.push(verify(bundle(&leaf, fleet.root(), Some(staple(&fleet, &unknown_cert, CertStatus::Good, this, next)))));
    let foreign = rogue
        .sign_ocsp_response_with(
            rogue.root_key(),
            ResponderId::ByName(rogue.root_cert().subject_dn.clone()),
            &[],
            &CertId::for_issuer(fleet.root(), leaf.serial_number.clone(), HashAlg::Sha1),
            CertStatus::Good,
            this,
            next,
            None,
        )
        .unwrap();
    seen.push(verify(bundle(&leaf, fleet.root(), Some(foreign.raw_der))));
    seen.push(verify(bundle(&leaf, rogue.root_cert(), None)));
    let down = |_: &str, _: &[u8]| Err(TransportError::Unreachable("down".into()));
    seen.push(
        server_verify_direct(&leaf.raw_der, &[fleet.root().raw_der.clone()], "http://x/", &down, &t, now)
            .verdict,
    );

    use RejectReason::*;
    let expected = [
        MissingStaple,
        MissingStaple,
        RevokedStatus,
        StatusNotGood,
        StaleResponse,
        SignatureInvalid,
        CertIdMismatch,
        UntrustedSigner,
        ChainInvalid,
        UpstreamUnreachable,
    ];
    assert_eq!(seen, expected.map(reject).to_vec());
    for r in RejectReason::ALL {
        assert!(expected.contains(&r), "{r} not covered");
    }
    assert_eq!(StatusNotGood.class(), RevokedStatus);
    assert_eq!(StaleResponse.class(), StaleResponse);
}

#[test]
fn window_edges_allow_five_minutes_of_skew() {
    let mut fleet = Fleet::new(45);
    let leaf = fleet.issue("leaf");
    let t = trust(&fleet);
    let this = fleet.now() + Duration::days(1);
    let next = this + Duration::days(7);
    let b = bundle(&leaf, fleet.root(), Some(staple(&fleet, &leaf, CertStatus::Good, this, next)));
    let at = |now| server_verify_bundle(&b, &t, now).verdict;
    assert_eq!(at(this - CLOCK_SKEW), Verdict::Accept);
    assert_eq!(at(this - CLOCK_SKEW - Duration::seconds(1)), reject(RejectReason::StaleResponse));
    assert_eq!(at(next + CLOCK_SKEW), Verdict::Accept);
    assert_eq!(at(next + CLOCK_SKEW + Duration::seconds(1)), reject(RejectReason::StaleResponse));
}

#[test]
fn expired_chain_is_rejected() {
    let mut fleet = Fleet::new(46);
    let profile = staplegrid_core::CertProfile::new("CN=short".parse().unwrap())
        .aia(common::FLEET_URL)
        .validity_days(1);
    let leaf = fleet.ca.issue_cert(&profile, fleet.now()).unwrap();
    let later = fleet.now() + Duration::days(2);
    let der = staple(&fleet, &leaf, CertStatus::Good, later, later + Duration::days(7));
    assert_eq!(
        server_verify_bundle(&bundle(&leaf, fleet.root(), Some(der)), &trust(&fleet), later).verdict,
        reject(RejectReason::ChainInvalid)
    );
}

#[test]
fn client_bundle_carries_the_cached_staple() {
    let mut fleet = Fleet::new(47);
    let leaf = fleet.issue("leaf");
    let cache = StapleCache::in_memory(vec![fleet.root().clone()]);
    let chain = vec![fleet.root().raw_der.clone()];
    let upstream = CountingTransport::new(fleet.responder.clone());
    let b = client_prepare_bundle(&leaf.raw_der, &chain, &cache, fleet.now(), &upstream).unwrap();
    assert_eq!(
        b.stapled_response.as_deref(),
        Some(cache.get_staple(&leaf.serial_number, fleet.now()).unwrap().der.as_slice())
    );
    assert_eq!(b.issuer_chain.last(), Some(&fleet.root().raw_der));
    assert_eq!(StapleBundle::from_wire(&b.to_wire()), Some(b.clone()));
    assert_eq!(b.bytes_on_wire(), b.to_wire().len() as u64);
    let outcome = server_verify_bundle(&b, &trust(&fleet), fleet.now());
    assert_eq!(outcome.verdict, Verdict::Accept);
    assert_eq!(upstream.calls(), 1);

    let refused = |_: &str, _: &[u8]| Ok(encode_ocsp_error(ResponseStatus::Unauthorized));
    let other = fleet.issue("other");
    assert!(matches!(
        client_prepare_bundle(&other.raw_der, &chain, &cache, fleet.now(), &refused),
        Err(CacheError::UpstreamError(ResponseStatus::Unauthorized))
    ));
}

#[test]
fn direct_mode_queries_once_per_handshake() {
    let mut fleet = Fleet::new(48);
    let good = fleet.issue("good");
    let bad = fleet.issue("bad");
    fleet.revoke(&bad, RevocationReason::KeyCompromise);
    let t = trust(&fleet);
    let chain = vec![fleet.root().raw_der.clone()];
    let upstream = CountingTransport::new(fleet.responder.clone());
    for n in 1..=5 {
        let o = server_verify_direct(&good.raw_der, &chain, common::FLEET_URL, &upstream, &t, fleet.now());
        assert_eq!((o.verdict, o.server_ocsp_queries), (Verdict::Accept, 1));
        assert_eq!(upstream.calls(), n);
    }
    let o = server_verify_direct(&bad.raw_der, &chain, common::FLEET_URL, &upstream, &t, fleet.now());
    assert_eq!(o.verdict, reject(RejectReason::RevokedStatus));
}

#[test]
fn scenario_query_accounting() {
    let stapled = run_scenario(&ScenarioConfig::new(100, Mode::Stapled)).unwrap();
    assert_eq!(stapled.server_ocsp_queries, 0);
    assert_eq!(stapled.client_ocsp_queries, 100);
    assert_eq!(stapled.accepts, 100);

    let direct = run_scenario(&ScenarioConfig::new(100, Mode::Direct)).unwrap();
    assert_eq!(direct.server_ocsp_queries, 100);
    assert_eq!(direct.client_ocsp_queries, 0);
    assert_eq!(direct.accepts, 100);
    assert!(direct.mean_handshake_latency > stapled.mean_handshake_latency);

    let mut shared = ScenarioConfig::new(100, Mode::Stapled);
    shared.distinct_certs = 10;
    let shared = run_scenario(&shared).unwrap();
    assert_eq!(shared.client_ocsp_queries, 10);
    assert_eq!(shared.server_ocsp_queries, 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn accounting_holds_for_any_size(n in 1usize..40, distinct in 1usize..40, seed in any::<u64>()) {
        let mut cfg = ScenarioConfig::new(n, Mode::Stapled);
        cfg.distinct_certs = distinct;
        cfg.seed = seed;
        let s = run_scenario(&cfg).unwrap();
        prop_assert_eq!(s.server_ocsp_queries, 0);
        prop_assert_eq!(s.client_ocsp_queries as usize, distinct.min(n));
        prop_assert_eq!(s.accepts + s.rejects, s.handshakes);
        cfg.mode = Mode::Direct;
        let d = run_scenario(&cfg).unwrap();
        prop_assert_eq!(d.server_ocsp_queries as usize, n);
    }
}

#[test]
fn scenarios_are_deterministic() {
    let mut cfg = ScenarioConfig::new(30, Mode::Stapled);
    cfg.distinct_certs = 7;
    cfg.seed = 9;
    cfg.faults = vec![
        parse_fault("@10 revoke meter-0003 keyCompromise").unwrap(),
        parse_fault("@20 advance 8d").unwrap(),
    ];
    let a = run_scenario(&cfg).unwrap();
    let b = run_scenario(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.table(), b.table());
    assert!(a.rejects > 0);
    assert_eq!(a.accepts + a.rejects, a.handshakes);
}

#[test]
fn upstream_outage_fault() {
    let mut cfg = ScenarioConfig::new(100, Mode::Direct);
    cfg.faults = vec![parse_fault("@50 upstream down").unwrap()];
    let s = run_scenario(&cfg).unwrap();
    assert_eq!(s.accepts, 50);
    assert_eq!(s.reject_reasons.get("UPSTREAM_UNREACHABLE"), Some(&50));
    assert_eq!(s.server_ocsp_queries, 100);

    // Stapled clients that already hold a staple keep working.
    let mut cfg = ScenarioConfig::new(100, Mode::Stapled);
    cfg.distinct_certs = 10;
    cfg.faults = vec![parse_fault("@50 upstream down").unwrap()];
    let s = run_scenario(&cfg).unwrap();
    assert_eq!(s.accepts, 100);
}

#[test]
fn replay_inside_and_past_the_window() {
    let stale = replay_attack_scenario(&ReplayConfig::default()).unwrap();
    assert_eq!(stale.verdict, reject(RejectReason::StaleResponse));
    assert_eq!(stale.server_ocsp_queries, 0);

    let inside = ReplayConfig {
        advance: Duration::days(6),
        ..Default::default()
    };
    assert_eq!(replay_attack_scenario(&inside).unwrap().verdict, Verdict::Accept);

    let edge = ReplayConfig {
        advance: Duration::days(7) + CLOCK_SKEW,
        ..Default::default()
    };
    assert_eq!(replay_attack_scenario(&edge).unwrap().verdict, Verdict::Accept);

    let tampered = ReplayConfig {
        advance: Duration::days(1),
        tamper: true,
        ..Default::default()
    };
    assert_eq!(
        replay_attack_scenario(&tampered).unwrap().verdict,
        reject(RejectReason::SignatureInvalid)
    );
}

#[test]
fn scripts_drive_the_world() {
    let script = parse_script(
        "seed 3\nmode stapled\n\
         issue m1 365\nissue m2\n\
         handshake m1 expect ACCEPT\n\
         handshake m2 direct expect ACCEPT\n\
         revoke m1 keyCompromise\n\
         handshake m1 expect ACCEPT   # old staple still fresh\n\
         handshake m1 direct expect REJECT(REVOKED_STATUS)\n\
         advance 6d+23h\n\
         maintain\n\
         handshake m1 expect REJECT(REVOKED_STATUS)\n\
         upstream down\n\
         handshake m2 direct expect REJECT(UPSTREAM_UNREACHABLE)\n",
    )
    .unwrap();
    assert_eq!(script.seed, 3);
    let report = run_script(&script).unwrap();
    assert_eq!(report.transcript.len(), 6);
    assert_eq!(report.stats.handshakes, 6);
    assert!(report.transcript[4].ends_with("-> REJECT(REVOKED_STATUS)"));
    assert_eq!(run_script(&script).unwrap(), report);

    let failing = parse_script("issue m1\nhandshake m1 expect REJECT(STALE_RESPONSE)\n").unwrap();
    match run_script(&failing) {
        Err(SimError::Script { line, message }) => {
            assert_eq!(line, 2);
            assert!(message.contains("expected REJECT(STALE_RESPONSE), got ACCEPT"), "{message}");
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        run_script(&parse_script("handshake ghost\n").unwrap()),
        Err(SimError::Script { line: 1, .. })
    ));
}

#[test]
fn world_maintenance_refreshes_staples() {
    let mut world = World::new(5).unwrap();
    world.issue("m", 365).unwrap();
    assert_eq!(world.handshake("m", Mode::Stapled).unwrap().verdict, Verdict::Accept);
    world.advance(Duration::days(8));
    assert_eq!(
        world.handshake("m", Mode::Stapled).unwrap().verdict,
        reject(RejectReason::StaleResponse)
    );
    let report = world.maintain().unwrap();
    assert_eq!(report.updated.len(), 1);
    assert_eq!(world.handshake("m", Mode::Stapled).unwrap().verdict, Verdict::Accept);
    let stats = world.stats();
    assert_eq!((stats.accepts, stats.rejects), (2, 1));
    assert_eq!(stats.client_ocsp_queries, 2);
    assert_eq!(stats.reject_reasons.get("STALE_RESPONSE"), Some(&1));
}

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use chrono::Duration;

use super::script::Event;
use super::{
    client_prepare_bundle, server_verify_bundle, server_verify_direct, HandshakeOutcome, Mode,
    StapleBundle, TrustStore, Verdict,
};
use crate::ca::{generate_root, AuthorityState, CaError, CertProfile};
use crate::cache::{CacheError, MaintenanceReport, StapleCache};
use crate::clock::{Clock, ManualClock};
use crate::codec::time::{self, Timestamp};
use crate::codec::{CertMeta, DistinguishedName, RevocationReason};
use crate::responder::{CrlSource, Responder, ResponderConfig, ResponderError, SharedCrl};
use crate::transport::CountingTransport;

/// AIA URL stamped into simulated meter certificates.
pub const SIM_OCSP_URL: &str = "http://ocsp.fleet.invalid/ocsp";
/// 2024-06-01 00:00:00 UTC.
pub const SIM_EPOCH: i64 = 1_717_200_000;

/// Modeled link: one client/server round trip per handshake, a fixed cost
/// per server-side OCSP query and serialization time for the handshake bytes.
pub const LINK_RTT_SECS: f64 = 0.020;
pub const OCSP_QUERY_SECS: f64 = 0.029;
pub const LINK_BYTES_PER_SEC: f64 = 125_000.0;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("line {line}: {message}")]
    Script { line: usize, message: String },
    #[error("no certificate named {0:?}")]
    UnknownCert(String),
    #[error("certificate {0:?} already issued")]
    DuplicateCert(String),
    #[error("expectation failed: {0}")]
    Expectation(String),
    #[error(transparent)]
    Ca(#[from] CaError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Responder(#[from] ResponderError),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScenarioStats {
    pub handshakes: u64,
    pub accepts: u64,
    pub rejects: u64,
    /// Rejections per reason class.
    pub reject_reasons: BTreeMap<String, u64>,
    pub server_ocsp_queries: u64,
    pub client_ocsp_queries: u64,
    pub total_bytes: u64,
    /// Seconds, from the link model.
    pub mean_handshake_latency: f64,
}

impl ScenarioStats {
    fn record(&mut self, o: &HandshakeOutcome) {
        let latency = modeled_latency(o);
        self.mean_handshake_latency = (self.mean_handshake_latency * self.handshakes as f64
            + latency)
            / (self.handshakes + 1) as f64;
        self.handshakes += 1;
        match o.verdict {
            Verdict::Accept => self.accepts += 1,
            Verdict::Reject(r) => {
                self.rejects += 1;
                *self
                    .reject_reasons
                    .entry(r.class().label().to_string())
                    .or_default() += 1;
            }
        }
        self.server_ocsp_queries += u64::from(o.server_ocsp_queries);
        self.total_bytes += o.bytes_on_wire;
    }

    /// `metric<TAB>value` lines.
    pub fn table(&self) -> String {
        let mut out = format!(
            "handshakes\t{}\naccepts\t{}\nrejects\t{}\nserver_ocsp_queries\t{}\n\
             client_ocsp_queries\t{}\ntotal_bytes\t{}\nmean_handshake_latency\t{:.6}\n",
            self.handshakes,
            self.accepts,
            self.rejects,
            self.server_ocsp_queries,
            self.client_ocsp_queries,
            self.total_bytes,
            self.mean_handshake_latency,
        );
        for (reason, n) in &self.reject_reasons {
            out.push_str(&format!("reject:{reason}\t{n}\n"));
        }
        out
    }
}

impl fmt::Display for ScenarioStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} handshakes: {} accepted, {} rejected; {} server OCSP queries, {} client fetches; \
             {} bytes; mean latency {:.1} ms",
            self.handshakes,
            self.accepts,
            self.rejects,
            self.server_ocsp_queries,
            self.client_ocsp_queries,
            self.total_bytes,
            self.mean_handshake_latency * 1000.0,
        )
    }
}

pub fn modeled_latency(o: &HandshakeOutcome) -> f64 {
    LINK_RTT_SECS
        + f64::from(o.server_ocsp_queries) * OCSP_QUERY_SECS
        + o.bytes_on_wire as f64 / LINK_BYTES_PER_SEC
}

/// A complete simulated PKI: CA, CRL-fed responder, client cache and server
/// trust store, all on one manual clock.
pub struct World {
    clock: ManualClock,
    ca: AuthorityState,
    crl_feed: SharedCrl,
    responder: Arc<Responder>,
    client_upstream: CountingTransport<Arc<Responder>>,
    server_upstream: CountingTransport<Arc<Responder>>,
    cache: StapleCache,
    trust: TrustStore,
    certs: BTreeMap<String, CertMeta>,
    stats: ScenarioStats,
}

impl World {
    pub fn new(seed: u64) -> Result<Self, SimError> {
        Self::starting_at(seed, time::from_unix(SIM_EPOCH))
    }

    pub fn starting_at(seed: u64, start: Timestamp) -> Result<Self, SimError> {
        let clock = ManualClock::new(start);
        let root_dn: DistinguishedName = "O=Fleet, CN=Fleet Root CA"
            .parse()
            .expect("static name parses");
        let mut ca = generate_root(&root_dn, clock.now(), Some(seed))?;
        let crl_feed = SharedCrl::new();
        crl_feed.publish(ca.emit_crl(clock.now())?.raw);
        let config = ResponderConfig::new(
            ca.root_cert().clone(),
            Arc::new(ca.root_key().clone()),
            CrlSource::Shared(crl_feed.clone()),
        );
        let responder = Arc::new(Responder::with_clock(config, Arc::new(clock.clone())));
        responder.refresh()?;
        let root = ca.root_cert().clone();
        Ok(Self {
            clock,
            crl_feed,
            client_upstream: CountingTransport::new(responder.clone()),
            server_upstream: CountingTransport::new(responder.clone()),
            responder,
            cache: StapleCache::in_memory(vec![root.clone()]),
            trust: TrustStore::new(vec![root]),
            ca,
            certs: BTreeMap::new(),
            stats: ScenarioStats::default(),
        })
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn clock(&self) -> &ManualClock {
        &self.clock
    }

    pub fn ca(&self) -> &AuthorityState {
        &self.ca
    }

    pub fn cache(&self) -> &StapleCache {
        &self.cache
    }

    pub fn trust(&self) -> &TrustStore {
        &self.trust
    }

    pub fn responder(&self) -> &Arc<Responder> {
        &self.responder
    }

    pub fn cert(&self, name: &str) -> Result<&CertMeta, SimError> {
        self.certs
            .get(name)
            .ok_or_else(|| SimError::UnknownCert(name.to_string()))
    }

    /// The chain a meter presents: just the root.
    pub fn chain(&self) -> Vec<Vec<u8>> {
        vec![self.ca.root_cert().raw_der.clone()]
    }

    pub fn issue(&mut self, name: &str, validity_days: u32) -> Result<&CertMeta, SimError> {
        if self.certs.contains_key(name) {
            return Err(SimError::DuplicateCert(name.to_string()));
        }
        let subject: DistinguishedName = format!("O=Fleet, CN={name}")
            .parse()
            .map_err(|e| SimError::Script {
                line: 0,
                message: format!("certificate name {name:?}: {e}"),
            })?;
        let profile = CertProfile::new(subject)
            .aia(SIM_OCSP_URL)
            .validity_days(validity_days);
        let cert = self.ca.issue_cert(&profile, self.clock.now())?;
        Ok(self.certs.entry(name.to_string()).or_insert(cert))
    }

    /// Revokes `name`, publishes a fresh CRL and lets the responder pick it up.
    pub fn revoke(&mut self, name: &str, reason: RevocationReason) -> Result<(), SimError> {
        let serial = self.cert(name)?.serial_number.clone();
        self.ca.revoke(&serial, reason, self.clock.now())?;
        self.crl_feed.publish(self.ca.emit_crl(self.clock.now())?.raw);
        self.refresh()
    }

    pub fn refresh(&mut self) -> Result<(), SimError> {
        self.responder.refresh()?;
        Ok(())
    }

    pub fn advance(&mut self, by: Duration) -> Timestamp {
        self.clock.advance(by)
    }

    pub fn set_upstream(&mut self, up: bool) {
        self.client_upstream.set_down(!up);
        self.server_upstream.set_down(!up);
    }

    pub fn maintain(&mut self) -> Result<MaintenanceReport, SimError> {
        Ok(self.cache.maintain(self.clock.now(), &self.client_upstream)?)
    }

    /// The bundle `name` would present right now. Fails if the client has no
    /// staple and cannot fetch one.
    pub fn prepare_bundle(&self, name: &str) -> Result<StapleBundle, SimError> {
        let cert = self.cert(name)?;
        Ok(client_prepare_bundle(
            &cert.raw_der,
            &self.chain(),
            &self.cache,
            self.clock.now(),
            &self.client_upstream,
        )?)
    }

    /// Runs one handshake and folds it into the statistics.
    pub fn handshake(&mut self, name: &str, mode: Mode) -> Result<HandshakeOutcome, SimError> {
        let cert = self.cert(name)?.clone();
        let now = self.clock.now();
        let outcome = match mode {
            Mode::Stapled => {
                let bundle = match self.prepare_bundle(name) {
                    Ok(b) => b,
                    Err(SimError::Cache(e)) => {
                        tracing::debug!(cert = name, error = %e, "no staple available");
                        StapleBundle {
                            client_cert: cert.raw_der.clone(),
                            issuer_chain: self.chain(),
                            stapled_response: None,
                        }
                    }
                    Err(e) => return Err(e),
                };
                server_verify_bundle(&bundle, &self.trust, now)
            }
            Mode::Direct => server_verify_direct(
                &cert.raw_der,
                &self.chain(),
                cert.aia_ocsp_url.as_deref().unwrap_or(SIM_OCSP_URL),
                &self.server_upstream,
                &self.trust,
                now,
            ),
        };
        self.stats.record(&outcome);
        Ok(outcome)
    }

    pub fn stats(&self) -> ScenarioStats {
        ScenarioStats {
            client_ocsp_queries: self.client_upstream.calls() as u64,
            ..self.stats.clone()
        }
    }

    /// Applies one scripted event; handshakes return their outcome.
    pub fn apply(&mut self, event: &Event, default_mode: Mode) -> Result<Option<HandshakeOutcome>, SimError> {
        match event {
            Event::Issue { name, days } => {
                self.issue(name, *days)?;
            }
            Event::Revoke { name, reason } => self.revoke(name, *reason)?,
            Event::Refresh => self.refresh()?,
            Event::Maintain => {
                self.maintain()?;
            }
            Event::Advance(d) => {
                self.advance(*d);
            }
            Event::Upstream(up) => self.set_upstream(*up),
            Event::Handshake { name, mode, expect } => {
                let outcome = self.handshake(name, mode.unwrap_or(default_mode))?;
                if let Some(want) = expect {
                    if outcome.verdict != *want {
                        return Err(SimError::Expectation(format!(
                            "handshake {name}: expected {want}, got {}",
                            outcome.verdict
                        )));
                    }
                }
                return Ok(Some(outcome));
            }
        }
        Ok(None)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub clients: usize,
    /// Clients share certificates round-robin when this is below `clients`.
    pub distinct_certs: usize,
    pub mode: Mode,
    pub seed: u64,
    /// `(n, event)`: apply `event` just before handshake `n`.
    pub faults: Vec<(usize, Event)>,
}

impl ScenarioConfig {
    pub fn new(clients: usize, mode: Mode) -> Self {
        Self {
            clients,
            distinct_certs: clients,
            mode,
            seed: 1,
            faults: Vec::new(),
        }
    }
}

/// `clients` handshakes, client `i` using certificate `i % distinct_certs`.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioStats, SimError> {
    let mut world = World::new(config.seed)?;
    let distinct = config.distinct_certs.clamp(1, config.clients.max(1));
    let names: Vec<String> = (0..distinct).map(|i| format!("meter-{i:04}")).collect();
    for name in &names {
        world.issue(name, 365)?;
    }
    for i in 0..config.clients {
        for (_, event) in config.faults.iter().filter(|(at, _)| *at == i) {
            world.apply(event, config.mode)?;
        }
        world.handshake(&names[i % distinct], config.mode)?;
    }
    Ok(world.stats())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayConfig {
    pub seed: u64,
    /// How far the clock moves between capturing the staple and replaying it.
    pub advance: Duration,
    /// Flip a signature byte in the replayed staple.
    pub tamper: bool,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            advance: Duration::days(8),
            tamper: false,
        }
    }
}

/// Captures a GOOD staple, revokes the certificate, advances the clock and
/// replays the old staple to the server.
pub fn replay_attack_scenario(config: &ReplayConfig) -> Result<HandshakeOutcome, SimError> {
    let mut world = World::new(config.seed)?;
    world.issue("meter-victim", 365)?;
    let mut captured = world.prepare_bundle("meter-victim")?;
    world.revoke("meter-victim", RevocationReason::KeyCompromise)?;
    world.advance(config.advance);
    if config.tamper {
        if let Some(last) = captured
            .stapled_response
            .as_mut()
            .and_then(|s| s.last_mut())
        {
            *last ^= 0x01;
        }
    }
    Ok(server_verify_bundle(&captured, world.trust(), world.now()))
}

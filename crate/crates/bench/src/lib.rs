//! Load and frame-size measurements against a running OCSP responder.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use staplegrid_core::codec::time;
use staplegrid_core::codec::{
    decode_ocsp_request, decode_ocsp_response, encode_ocsp_request, verify_ocsp_signature,
};
use staplegrid_core::responder::{
    serve, CrlSource, Responder, ResponderConfig, ServiceHandle, SharedCrl,
};
use staplegrid_core::transport::{HttpTransport, OcspTransport, TransportError};
use staplegrid_core::{
    generate_root, AuthorityState, CertId, CertMeta, CertProfile, Clock, CodecError, HashAlg,
    ManualClock, OcspRequest, RevocationReason, SerialNumber, Timestamp,
};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("testbed setup failed: {0}")]
    Setup(String),
    #[error("no request bodies to send")]
    NoRequests,
    #[error("request body {0} is not a valid OCSP request: {1}")]
    BadRequestBody(usize, CodecError),
    #[error("upstream unreachable: {0}")]
    UpstreamUnreachable(TransportError),
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("aborted after {failures} failed requests")]
    Aborted {
        failures: usize,
        partial: Box<BenchResult>,
        first_error: String,
    },
}

/// Timing summary of a request run. All times in seconds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchResult {
    pub requests: usize,
    pub failures: usize,
    pub workers: usize,
    pub wall_time: f64,
    /// `wall_time / requests`.
    pub avg_request_time: f64,
    pub mean_latency: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

impl BenchResult {
    fn from_latencies(mut latencies: Vec<Duration>, failures: usize, workers: usize, wall: Duration) -> Self {
        latencies.sort_unstable();
        let secs = |d: Duration| d.as_secs_f64();
        let requests = latencies.len();
        let wall_time = secs(wall);
        let mean_latency = if requests == 0 {
            0.0
        } else {
            latencies.iter().map(|d| secs(*d)).sum::<f64>() / requests as f64
        };
        Self {
            requests,
            failures,
            workers,
            wall_time,
            avg_request_time: if requests == 0 { 0.0 } else { wall_time / requests as f64 },
            mean_latency,
            p50: nearest_rank(&latencies, 50.0),
            p95: nearest_rank(&latencies, 95.0),
            p99: nearest_rank(&latencies, 99.0),
            max: latencies.last().map_or(0.0, |d| secs(*d)),
        }
    }

    pub fn to_json_line(&self) -> String {
        report_line("bench_requests", self)
    }

    pub fn summary(&self) -> String {
        format!(
            "requests={} workers={} failures={} wall={:.3}s avg={:.4}s p50={:.4}s p95={:.4}s p99={:.4}s",
            self.requests,
            self.workers,
            self.failures,
            self.wall_time,
            self.avg_request_time,
            self.p50,
            self.p95,
            self.p99
        )
    }
}

/// Nearest-rank percentile of sorted samples, in seconds.
pub fn nearest_rank(sorted: &[Duration], pct: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1].as_secs_f64()
}

/// HTTP body sizes of one query cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FrameMeasurement {
    pub request_bytes: usize,
    pub response_bytes: usize,
    pub total_bytes: usize,
}

impl FrameMeasurement {
    pub fn to_json_line(&self) -> String {
        report_line("bench_frame", self)
    }
}

fn report_line<T: Serialize>(kind: &str, value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("plain struct serializes");
    v["kind"] = serde_json::Value::from(kind);
    v.to_string()
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub requests: usize,
    pub workers: usize,
    pub anchors: Vec<CertMeta>,
    /// Verification time for responder signer certificates.
    pub now: Timestamp,
    pub timeout: Duration,
}

/// Builds one single-CertID request per serial, each with a fresh 16-byte
/// nonce from `seed`.
pub fn request_bodies(issuer: &CertMeta, serials: &[SerialNumber], seed: u64) -> Vec<Vec<u8>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    serials
        .iter()
        .map(|s| {
            let mut nonce = vec![0u8; 16];
            rng.fill_bytes(&mut nonce);
            let id = CertId::for_issuer(issuer, s.clone(), HashAlg::Sha1);
            let req = OcspRequest::new(vec![id], Some(nonce)).expect("nonce length in range");
            encode_ocsp_request(&req).expect("request encodes")
        })
        .collect()
}

/// Checks a response body against the request that produced it.
pub fn check_response(
    req: &OcspRequest,
    body: &[u8],
    anchors: &[CertMeta],
    now: Timestamp,
) -> Result<(), String> {
    let resp = decode_ocsp_response(body).map_err(|e| e.to_string())?;
    let verified = verify_ocsp_signature(&resp, anchors, now).map_err(|e| e.to_string())?;
    if verified.nonce_echo() != req.nonce.as_deref() {
        return Err("nonce mismatch".into());
    }
    for id in &req.cert_ids {
        if verified.find(id).is_none() {
            return Err(format!("no answer for serial {}", id.serial_number.to_hex()));
        }
    }
    Ok(())
}

/// Sends `config.requests` POSTs to `endpoint`, cycling through `bodies`,
/// and verifies every answer. Each worker owns one keep-alive connection.
pub fn bench_requests(
    endpoint: &str,
    bodies: &[Vec<u8>],
    config: &BenchConfig,
) -> Result<BenchResult, BenchError> {
    if bodies.is_empty() || config.requests == 0 {
        return Err(BenchError::NoRequests);
    }
    let requests: Vec<OcspRequest> = bodies
        .iter()
        .enumerate()
        .map(|(i, b)| decode_ocsp_request(b).map_err(|e| BenchError::BadRequestBody(i, e)))
        .collect::<Result<_, _>>()?;
    let workers = config.workers.max(1);
    let budget = config.requests / 100;
    let failures = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let first_error = Mutex::new(None::<String>);
    let latencies = Mutex::new(Vec::with_capacity(config.requests));

    let started = Instant::now();
    std::thread::scope(|scope| {
        for w in 0..workers {
            let (requests, failures, abort, first_error, latencies) =
                (&requests, &failures, &abort, &first_error, &latencies);
            scope.spawn(move || {
                let transport = HttpTransport::new(config.timeout);
                let mut local = Vec::new();
                for i in (w..config.requests).step_by(workers) {
                    if abort.load(Ordering::Relaxed) {
                        break;
                    }
                    let k = i % bodies.len();
                    let t = Instant::now();
                    let outcome = transport
                        .post(endpoint, &bodies[k])
                        .map_err(|e| e.to_string())
                        .and_then(|body| check_response(&requests[k], &body, &config.anchors, config.now));
                    let elapsed = t.elapsed();
                    match outcome {
                        Ok(()) => local.push(elapsed),
                        Err(e) => {
                            first_error.lock().unwrap().get_or_insert(e);
                            if failures.fetch_add(1, Ordering::Relaxed) + 1 > budget {
                                abort.store(true, Ordering::Relaxed);
                            }
                        }
                    }
                }
                latencies.lock().unwrap().extend(local);
            });
        }
    });
    let wall = started.elapsed();
    let failures = failures.into_inner();
    let result = BenchResult::from_latencies(latencies.into_inner().unwrap(), failures, workers, wall);
    if abort.into_inner() {
        return Err(BenchError::Aborted {
            failures,
            partial: Box::new(result),
            first_error: first_error.into_inner().unwrap().unwrap_or_default(),
        });
    }
    Ok(result)
}

/// One request/response cycle for `cert`, reporting exact body sizes.
pub fn measure_frame(
    transport: &dyn OcspTransport,
    endpoint: &str,
    cert: &CertMeta,
    issuer: &CertMeta,
    nonce: Option<&[u8]>,
    now: Timestamp,
) -> Result<FrameMeasurement, BenchError> {
    let id = CertId::for_issuer(issuer, cert.serial_number.clone(), HashAlg::Sha1);
    let req = OcspRequest::new(vec![id], nonce.map(<[u8]>::to_vec))
        .map_err(|e| BenchError::InvalidResponse(e.to_string()))?;
    let body = encode_ocsp_request(&req).map_err(|e| BenchError::InvalidResponse(e.to_string()))?;
    let resp = transport
        .post(endpoint, &body)
        .map_err(BenchError::UpstreamUnreachable)?;
    check_response(&req, &resp, std::slice::from_ref(issuer), now).map_err(BenchError::InvalidResponse)?;
    Ok(FrameMeasurement {
        request_bytes: body.len(),
        response_bytes: resp.len(),
        total_bytes: body.len() + resp.len(),
    })
}

/// Fixed start instant of a [`Testbed`]: 2024-06-19 09:00:00 UTC.
pub const TESTBED_EPOCH: i64 = 1_718_787_600;

/// An in-process CA and responder on a loopback port, frozen in time so
/// response bytes repeat exactly.
pub struct Testbed {
    pub ca: AuthorityState,
    pub clock: ManualClock,
    pub revoked: Vec<CertMeta>,
    pub good: Vec<CertMeta>,
    handle: Option<ServiceHandle>,
}

impl Testbed {
    /// Issues `revoked + good` certificates, revokes the first `revoked`,
    /// and serves the resulting CRL.
    pub fn start(seed: u64, revoked: usize, good: usize) -> Result<Self, BenchError> {
        Self::launch(seed, revoked, good, false)
    }

    /// As [`Testbed::start`], but responses are signed by a delegated
    /// OCSP-signing certificate that travels inside every response.
    pub fn start_delegated(seed: u64, revoked: usize, good: usize) -> Result<Self, BenchError> {
        Self::launch(seed, revoked, good, true)
    }

    fn launch(seed: u64, revoked: usize, good: usize, delegated: bool) -> Result<Self, BenchError> {
        let setup = |e: &dyn std::fmt::Display| BenchError::Setup(e.to_string());
        let now = time::from_unix(TESTBED_EPOCH);
        let dn = "O=Bench, CN=Bench Root".parse().map_err(|e| setup(&e))?;
        let mut ca = generate_root(&dn, now, Some(seed)).map_err(|e| setup(&e))?;
        let mut certs = Vec::with_capacity(revoked + good);
        for i in 0..revoked + good {
            let dn = format!("O=Bench, CN=meter-{i:06}").parse().map_err(|e| setup(&e))?;
            let profile = CertProfile::new(dn).aia("http://127.0.0.1/ocsp");
            certs.push(ca.issue_cert(&profile, now).map_err(|e| setup(&e))?);
        }
        let good_certs = certs.split_off(revoked);
        for c in &certs {
            ca.revoke(&c.serial_number, RevocationReason::KeyCompromise, now)
                .map_err(|e| setup(&e))?;
        }
        let crl = SharedCrl::new();
        crl.publish(ca.emit_crl(now).map_err(|e| setup(&e))?.raw);
        let mut config = ResponderConfig::new(
            ca.root_cert().clone(),
            Arc::new(ca.root_key().clone()),
            CrlSource::Shared(crl),
        );
        if delegated {
            let dn = "O=Bench, CN=Bench OCSP Signer".parse().map_err(|e| setup(&e))?;
            let profile = CertProfile::new(dn).ocsp_signing();
            let (cert, key) = ca.issue_with_key(&profile, now).map_err(|e| setup(&e))?;
            config.signer = Arc::new(key);
            config.signer_cert = Some(cert);
        }
        config.listen_address = "127.0.0.1:0".into();
        let clock = ManualClock::new(now);
        let responder = Arc::new(Responder::with_clock(config, Arc::new(clock.clone())));
        let handle = serve(responder, false).map_err(|e| setup(&e))?;
        Ok(Self {
            ca,
            clock,
            revoked: certs,
            good: good_certs,
            handle: Some(handle),
        })
    }

    pub fn endpoint(&self) -> String {
        self.handle.as_ref().expect("running").ocsp_url()
    }

    pub fn root(&self) -> &CertMeta {
        self.ca.root_cert()
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    /// One request body per certificate, alternating revoked and good while
    /// both last.
    pub fn bodies(&self, seed: u64) -> Vec<Vec<u8>> {
        let n = self.revoked.len().max(self.good.len());
        let serials: Vec<_> = (0..n)
            .flat_map(|i| [self.revoked.get(i), self.good.get(i)])
            .flatten()
            .map(|c| c.serial_number.clone())
            .collect();
        request_bodies(self.root(), &serials, seed)
    }

    pub fn bench_config(&self, requests: usize, workers: usize) -> BenchConfig {
        BenchConfig {
            requests,
            workers,
            anchors: vec![self.root().clone()],
            now: self.now(),
            timeout: Duration::from_secs(10),
        }
    }
}

impl Drop for Testbed {
    fn drop(&mut self) {
        if let Some(h) = self.handle.take() {
            h.shutdown();
        }
    }
}

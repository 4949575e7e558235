//! Moving OCSP bytes between a client and a responder.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("responder unreachable: {0}")]
    Unreachable(String),
    #[error("responder answered HTTP {0}")]
    HttpStatus(u16),
}

pub const OCSP_REQUEST_TYPE: &str = "application/ocsp-request";
pub const OCSP_RESPONSE_TYPE: &str = "application/ocsp-response";

/// POSTs a DER OCSP request to `url` and returns the DER response body.
pub trait OcspTransport: Send + Sync {
    fn post(&self, url: &str, body: &[u8]) -> Result<Vec<u8>, TransportError>;
}

impl<F> OcspTransport for F
where
    F: Fn(&str, &[u8]) -> Result<Vec<u8>, TransportError> + Send + Sync,
{
    fn post(&self, url: &str, body: &[u8]) -> Result<Vec<u8>, TransportError> {
        self(url, body)
    }
}

impl<T: OcspTransport + ?Sized> OcspTransport for std::sync::Arc<T> {
    fn post(&self, url: &str, body: &[u8]) -> Result<Vec<u8>, TransportError> {
        (**self).post(url, body)
    }
}

/// Blocking HTTP/1.1 client with connection reuse.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        Self {
            agent: config.new_agent(),
        }
    }

    pub fn get(&self, url: &str) -> Result<Vec<u8>, TransportError> {
        let resp = self
            .agent
            .get(url)
            .call()
            .map_err(|e| TransportError::Unreachable(e.to_string()))?;
        read_body(resp)
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(10))
    }
}

fn read_body(resp: ureq::http::Response<ureq::Body>) -> Result<Vec<u8>, TransportError> {
    let status = resp.status().as_u16();
    if status != 200 {
        return Err(TransportError::HttpStatus(status));
    }
    resp.into_body()
        .with_config()
        .limit(16 * 1024 * 1024)
        .read_to_vec()
        .map_err(|e| TransportError::Unreachable(e.to_string()))
}

impl OcspTransport for HttpTransport {
    fn post(&self, url: &str, body: &[u8]) -> Result<Vec<u8>, TransportError> {
        let resp = self
            .agent
            .post(url)
            .header("Content-Type", OCSP_REQUEST_TYPE)
            .send(body)
            .map_err(|e| TransportError::Unreachable(e.to_string()))?;
        read_body(resp)
    }
}

/// Wraps a transport, counting calls and optionally simulating an outage.
pub struct CountingTransport<T> {
    inner: T,
    calls: AtomicUsize,
    down: AtomicBool,
}

impl<T> CountingTransport<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
            down: AtomicBool::new(false),
        }
    }

    /// Attempts made so far, including ones refused while down.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }

    pub fn set_down(&self, down: bool) {
        self.down.store(down, Ordering::SeqCst);
    }

    pub fn is_down(&self) -> bool {
        self.down.load(Ordering::SeqCst)
    }
}

impl<T: OcspTransport> OcspTransport for CountingTransport<T> {
    fn post(&self, url: &str, body: &[u8]) -> Result<Vec<u8>, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.is_down() {
            return Err(TransportError::Unreachable(format!("{url}: upstream down")));
        }
        self.inner.post(url, body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counting_wrapper_counts_and_fails_when_down() {
        let t = CountingTransport::new(|_: &str, b: &[u8]| Ok(b.to_vec()));
        assert_eq!(t.post("x", b"abc").unwrap(), b"abc");
        t.set_down(true);
        assert!(matches!(t.post("x", b"abc"), Err(TransportError::Unreachable(_))));
        assert_eq!(t.calls(), 2);
    }
}

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use base64::Engine;
use tokio::sync::oneshot;

use super::{Responder, ResponderError};
use crate::codec::{encode_ocsp_error, ResponseStatus};
use crate::transport::OCSP_RESPONSE_TYPE;

pub const CRL_PATH: &str = "/downloadcrl/download_crl";

/// A responder serving HTTP on a background thread.
pub struct ServiceHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// `http://<addr>/ocsp`
    pub fn ocsp_url(&self) -> String {
        format!("http://{}/ocsp", self.addr)
    }

    pub fn crl_url(&self) -> String {
        format!("http://{}{CRL_PATH}", self.addr)
    }

    /// Stops accepting connections and waits for the server thread.
    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    /// Blocks until the server exits (Ctrl-C when started with
    /// `stop_on_ctrl_c`).
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    fn stop_and_join(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        self.stop_and_join();
    }
}

fn ocsp_reply(der: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, OCSP_RESPONSE_TYPE)], der).into_response()
}

async fn blocking_respond(responder: Arc<Responder>, body: Vec<u8>) -> Response {
    match tokio::task::spawn_blocking(move || responder.respond(&body)).await {
        Ok(der) => ocsp_reply(der),
        Err(_) => ocsp_reply(encode_ocsp_error(ResponseStatus::InternalError)),
    }
}

async fn handle_post(State(responder): State<Arc<Responder>>, body: Bytes) -> Response {
    blocking_respond(responder, body.to_vec()).await
}

fn percent_decode(s: &str) -> Option<String> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = std::str::from_utf8(bytes.get(i + 1..i + 3)?).ok()?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

fn decode_get_request(encoded: &str) -> Option<Vec<u8>> {
    use base64::engine::general_purpose::{STANDARD, URL_SAFE, URL_SAFE_NO_PAD};
    let text = percent_decode(encoded)?;
    STANDARD
        .decode(&text)
        .or_else(|_| URL_SAFE.decode(&text))
        .or_else(|_| URL_SAFE_NO_PAD.decode(&text))
        .ok()
}

async fn handle_get(
    State(responder): State<Arc<Responder>>,
    Path(encoded): Path<String>,
) -> Response {
    match decode_get_request(&encoded) {
        Some(body) => blocking_respond(responder, body).await,
        None => ocsp_reply(encode_ocsp_error(ResponseStatus::MalformedRequest)),
    }
}

async fn handle_crl(State(responder): State<Arc<Responder>>) -> Response {
    match responder.current_crl() {
        Some(der) => ([(header::CONTENT_TYPE, "application/pkix-crl")], der).into_response(),
        None => StatusCode::SERVICE_UNAVAILABLE.into_response(),
    }
}

fn router(responder: Arc<Responder>) -> Router {
    Router::new()
        .route("/", post(handle_post))
        .route("/ocsp", post(handle_post))
        .route("/ocsp/{*request}", get(handle_get))
        .route(CRL_PATH, get(handle_crl))
        .with_state(responder)
}

/// Binds the configured address, loads the first blacklist and serves
/// requests until the handle is shut down.
pub fn serve(responder: Arc<Responder>, stop_on_ctrl_c: bool) -> Result<ServiceHandle, ResponderError> {
    let listen = responder.config().listen_address.clone();
    let bind_err = |source| ResponderError::BindFailure {
        addr: listen.clone(),
        source,
    };
    let listener = std::net::TcpListener::bind(&listen).map_err(bind_err)?;
    listener.set_nonblocking(true).map_err(bind_err)?;
    let addr = listener.local_addr().map_err(bind_err)?;

    if let Err(e) = responder.refresh() {
        tracing::warn!(error = %e, "initial CRL load failed; answering tryLater");
    }

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(bind_err)?;
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let thread = std::thread::Builder::new()
        .name("ocsp-responder".into())
        .spawn(move || {
            runtime.block_on(async move {
                let listener = match tokio::net::TcpListener::from_std(listener) {
                    Ok(l) => l,
                    Err(e) => {
                        tracing::error!(error = %e, "listener setup failed");
                        return;
                    }
                };
                let refresher = tokio::spawn(refresh_loop(responder.clone()));
                let shutdown = async move {
                    if stop_on_ctrl_c {
                        tokio::select! {
                            _ = stop_rx => {}
                            _ = tokio::signal::ctrl_c() => {}
                        }
                    } else {
                        let _ = stop_rx.await;
                    }
                };
                tracing::info!(%addr, "responder listening");
                if let Err(e) = axum::serve(listener, router(responder))
                    .with_graceful_shutdown(shutdown)
                    .await
                {
                    tracing::error!(error = %e, "server error");
                }
                refresher.abort();
            });
        })
        .map_err(bind_err)?;
    Ok(ServiceHandle {
        addr,
        stop: Some(stop_tx),
        thread: Some(thread),
    })
}

async fn refresh_loop(responder: Arc<Responder>) {
    let period = responder.config().refresh_interval;
    let mut ticker = tokio::time::interval(period);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    ticker.tick().await;
    loop {
        ticker.tick().await;
        let r = responder.clone();
        match tokio::task::spawn_blocking(move || r.refresh()).await {
            Ok(Err(e)) => tracing::warn!(error = %e, "CRL refresh failed; keeping previous blacklist"),
            Err(e) => tracing::warn!(error = %e, "CRL refresh task failed"),
            Ok(Ok(_)) => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn get_path_decodes_standard_and_url_safe() {
        assert_eq!(decode_get_request("MAM%2BAQ%3D%3D").unwrap(), vec![0x30, 0x03, 0x3e, 0x01]);
        assert_eq!(decode_get_request("MAM-AQ").unwrap(), vec![0x30, 0x03, 0x3e, 0x01]);
        assert!(decode_get_request("%zz").is_none());
    }
}

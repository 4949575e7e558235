use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::Duration as StdDuration;

use chrono::Duration;

use super::{ResponderError, DEFAULT_RESPONSE_VALIDITY};
use crate::clock::parse_duration;
use crate::codec::{load_certificate, CertMeta, EcdsaKey, Signer};

/// An in-process CRL publication point.
#[derive(Clone, Default)]
pub struct SharedCrl(Arc<RwLock<Option<Vec<u8>>>>);

impl SharedCrl {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(&self, der: Vec<u8>) {
        *self.0.write().unwrap_or_else(|e| e.into_inner()) = Some(der);
    }

    pub fn get(&self) -> Option<Vec<u8>> {
        self.0.read().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl std::fmt::Debug for SharedCrl {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SharedCrl")
    }
}

#[derive(Clone, Debug)]
pub enum CrlSource {
    File(PathBuf),
    Url(String),
    Shared(SharedCrl),
}

impl CrlSource {
    /// `http://` and `https://` become URLs, anything else a path.
    pub fn parse(s: &str) -> Self {
        if s.starts_with("http://") || s.starts_with("https://") {
            Self::Url(s.to_string())
        } else {
            Self::File(PathBuf::from(s))
        }
    }
}

#[derive(Clone)]
pub struct ResponderConfig {
    pub listen_address: String,
    pub crl_source: CrlSource,
    pub refresh_interval: StdDuration,
    pub response_validity: Duration,
    pub issuer_cert: CertMeta,
    pub signer: Arc<dyn Signer>,
    /// Delegated signing certificate. When absent the issuer key signs.
    pub signer_cert: Option<CertMeta>,
}

impl ResponderConfig {
    pub fn new(issuer_cert: CertMeta, signer: Arc<dyn Signer>, crl_source: CrlSource) -> Self {
        Self {
            listen_address: ResponderSettings::DEFAULT_LISTEN.to_string(),
            crl_source,
            refresh_interval: StdDuration::from_secs(3600),
            response_validity: DEFAULT_RESPONSE_VALIDITY,
            issuer_cert,
            signer,
            signer_cert: None,
        }
    }
}

impl std::fmt::Debug for ResponderConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResponderConfig")
            .field("listen_address", &self.listen_address)
            .field("crl_source", &self.crl_source)
            .field("refresh_interval", &self.refresh_interval)
            .field("response_validity", &self.response_validity)
            .field("issuer", &self.issuer_cert.subject_dn)
            .finish_non_exhaustive()
    }
}

/// Raw `key = value` settings, before files are loaded.
///
/// Keys: `listen_address`, `crl_source`, `refresh_interval`,
/// `response_validity`, `issuer_cert`, `signing_key`, `signer_cert`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ResponderSettings {
    values: BTreeMap<String, String>,
}

const KEYS: &[&str] = &[
    "listen_address",
    "crl_source",
    "refresh_interval",
    "response_validity",
    "issuer_cert",
    "signing_key",
    "signer_cert",
];

impl ResponderSettings {
    pub const DEFAULT_LISTEN: &'static str = "127.0.0.1:8080";
    pub const ENV_PREFIX: &'static str = "STAPLEGRID_";

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ResponderError> {
        let mut s = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ResponderError::Config(format!("line {}: expected key = value", n + 1)))?;
            s.set(k.trim(), v.trim().trim_matches('"'))?;
        }
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self, ResponderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ResponderError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ResponderError> {
        if !KEYS.contains(&key) {
            return Err(ResponderError::Config(format!("unknown key {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Overlays `STAPLEGRID_<KEY>` variables.
    pub fn apply_env(&mut self, env: impl IntoIterator<Item = (String, String)>) {
        for (k, v) in env {
            if let Some(key) = k.strip_prefix(Self::ENV_PREFIX) {
                let key = key.to_ascii_lowercase();
                if KEYS.contains(&key.as_str()) {
                    self.values.insert(key, v);
                }
            }
        }
    }

    fn required(&self, key: &str) -> Result<&str, ResponderError> {
        self.get(key)
            .ok_or_else(|| ResponderError::Config(format!("missing {key}")))
    }

    fn duration(&self, key: &str) -> Result<Option<Duration>, ResponderError> {
        self.get(key)
            .map(|v| {
                parse_duration(v)
                    .filter(|d| *d > Duration::zero())
                    .ok_or_else(|| ResponderError::Config(format!("{key}: bad duration {v:?}")))
            })
            .transpose()
    }

    /// Loads the referenced certificate and key files.
    pub fn into_config(self) -> Result<ResponderConfig, ResponderError> {
        let read = |key: &str| -> Result<Vec<u8>, ResponderError> {
            let path = self.required(key)?;
            std::fs::read(path).map_err(|e| ResponderError::Config(format!("{key} {path}: {e}")))
        };
        let issuer_cert = load_certificate(&read("issuer_cert")?)
            .map_err(|e| ResponderError::Config(format!("issuer_cert: {e}")))?;
        let key_text = String::from_utf8(read("signing_key")?)
            .map_err(|_| ResponderError::Config("signing_key is not PEM".into()))?;
        let key = EcdsaKey::from_pkcs8_pem(&key_text)
            .map_err(|e| ResponderError::Config(format!("signing_key: {e}")))?;
        let signer_cert = match self.get("signer_cert") {
            Some(_) => Some(
                load_certificate(&read("signer_cert")?)
                    .map_err(|e| ResponderError::Config(format!("signer_cert: {e}")))?,
            ),
            None => None,
        };
        let expected = signer_cert.as_ref().unwrap_or(&issuer_cert);
        if expected.public_key_info != key.public_key_info() {
            return Err(ResponderError::Config(
                "signing_key does not match the signing certificate".into(),
            ));
        }
        let mut config = ResponderConfig::new(
            issuer_cert,
            Arc::new(key),
            CrlSource::parse(self.required("crl_source")?),
        );
        config.signer_cert = signer_cert;
        if let Some(addr) = self.get("listen_address") {
            config.listen_address = addr.to_string();
        }
        if let Some(d) = self.duration("refresh_interval")? {
            config.refresh_interval = d
                .to_std()
                .map_err(|e| ResponderError::Config(format!("refresh_interval: {e}")))?;
        }
        if let Some(d) = self.duration("response_validity")? {
            config.response_validity = d;
        }
        Ok(config)
    }
}

//! State-directory layout: `root.key`, `root.pem`, `issued/<serial>.pem`, `crl.pem`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{make_rng, AuthorityState, CaError};
use crate::codec::{load_certificate, parse_crl, CrlEncoding, EcdsaKey};

pub const ROOT_KEY: &str = "root.key";
pub const ROOT_CERT: &str = "root.pem";
pub const ISSUED_DIR: &str = "issued";
pub const CRL_FILE: &str = "crl.pem";

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CaError + '_ {
    move |source| CaError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write(path: &Path, contents: &[u8]) -> Result<(), CaError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(io(&tmp))?;
    fs::rename(&tmp, path).map_err(io(path))
}

pub(super) fn save(state: &AuthorityState, dir: &Path) -> Result<(), CaError> {
    let issued = dir.join(ISSUED_DIR);
    fs::create_dir_all(&issued).map_err(io(&issued))?;
    write(&dir.join(ROOT_KEY), state.root_key.to_pkcs8_pem().as_bytes())?;
    write(&dir.join(ROOT_CERT), state.root_cert.to_pem().as_bytes())?;
    for (serial, cert) in &state.issued {
        let path = issued.join(format!("{}.pem", serial.to_hex()));
        if !path.exists() {
            write(&path, cert.to_pem().as_bytes())?;
        }
    }
    Ok(())
}

/// Writes `crl` as the directory's current CRL.
pub fn write_crl(dir: &Path, crl: &crate::codec::CrlSnapshot) -> Result<(), CaError> {
    write(&dir.join(CRL_FILE), crl.to_pem().as_bytes())
}

pub(super) fn load(dir: &Path, seed: Option<u64>) -> Result<AuthorityState, CaError> {
    let key_path = dir.join(ROOT_KEY);
    let key_text = fs::read_to_string(&key_path).map_err(io(&key_path))?;
    let root_key = EcdsaKey::from_pkcs8_pem(&key_text)?;
    let cert_path = dir.join(ROOT_CERT);
    let root_cert = load_certificate(&fs::read(&cert_path).map_err(io(&cert_path))?)?;
    if root_cert.public_key_info != crate::codec::Signer::public_key_info(&root_key) {
        return Err(CaError::State("root.key does not match root.pem".into()));
    }

    let mut issued = BTreeMap::new();
    let issued_dir = dir.join(ISSUED_DIR);
    if issued_dir.is_dir() {
        for entry in fs::read_dir(&issued_dir).map_err(io(&issued_dir))? {
            let path = entry.map_err(io(&issued_dir))?.path();
            if path.extension().is_some_and(|e| e == "pem") {
                let cert = load_certificate(&fs::read(&path).map_err(io(&path))?)?;
                issued.insert(cert.serial_number.clone(), cert);
            }
        }
    }

    let mut revoked = BTreeMap::new();
    let mut crl_number = 0;
    let crl_path = dir.join(CRL_FILE);
    if crl_path.exists() {
        let crl = parse_crl(&fs::read(&crl_path).map_err(io(&crl_path))?, CrlEncoding::Pem)?;
        crl.verify_signature(&root_cert)?;
        crl_number = crl
            .crl_number
            .as_ref()
            .and_then(|n| u64::try_from(n).ok())
            .unwrap_or(0);
        for e in crl.entries {
            revoked.insert(e.serial_number, (e.revocation_date, e.reason));
        }
    }
    Ok(AuthorityState {
        root_key,
        root_cert,
        issued,
        revoked,
        crl_number,
        rng: make_rng(seed),
    })
}

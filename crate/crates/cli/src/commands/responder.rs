use std::path::Path;
use std::sync::Arc;

use staplegrid_core::ca::{CRL_FILE, ROOT_CERT, ROOT_KEY};
use staplegrid_core::responder::{serve, Responder, ResponderSettings};

use crate::args::{ResponderCommand, ServeArgs};

pub fn settings(args: &ServeArgs) -> anyhow::Result<ResponderSettings> {
    let mut s = ResponderSettings::default();
    s.apply_env(std::env::vars());
    let path = |p: &Path| p.display().to_string();
    let flags = [
        ("listen_address", args.listen.clone()),
        ("crl_source", args.crl_source.clone()),
        ("issuer_cert", args.issuer_cert.as_deref().map(path)),
        ("signing_key", args.signing_key.as_deref().map(path)),
        ("signer_cert", args.signer_cert.as_deref().map(path)),
        ("refresh_interval", args.refresh_interval.clone()),
        ("response_validity", args.response_validity.clone()),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            s.set(key, &v)?;
        }
    }
    if let Some(dir) = &args.ca_dir {
        for (key, file) in [("issuer_cert", ROOT_CERT), ("signing_key", ROOT_KEY), ("crl_source", CRL_FILE)] {
            if s.get(key).is_none() {
                s.set(key, &path(&dir.join(file)))?;
            }
        }
    }
    Ok(s)
}

pub fn run(cmd: ResponderCommand) -> anyhow::Result<()> {
    let ResponderCommand::Serve(args) = cmd;
    let config = settings(&args)?.into_config()?;
    let responder = Arc::new(Responder::new(config));
    let handle = serve(responder, true)?;
    println!("ocsp: {}", handle.ocsp_url());
    println!("crl:  {}", handle.crl_url());
    handle.wait();
    Ok(())
}

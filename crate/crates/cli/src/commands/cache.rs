use std::path::PathBuf;

use anyhow::Context;
use staplegrid_core::cache::StapleCache;
use staplegrid_core::codec::pem;
use staplegrid_core::transport::HttpTransport;
use staplegrid_core::CertMeta;

use super::{now, read, read_cert};
use crate::args::CacheCommand;

fn anchors(paths: &[PathBuf]) -> anyhow::Result<Vec<CertMeta>> {
    paths.iter().map(|p| read_cert(p)).collect()
}

fn open(path: &std::path::Path, anchors: Vec<CertMeta>) -> anyhow::Result<StapleCache> {
    let cache = StapleCache::open(path, anchors).with_context(|| format!("opening {}", path.display()))?;
    if cache.quarantined() > 0 {
        eprintln!("warning: {} damaged record(s) quarantined", cache.quarantined());
    }
    Ok(cache)
}

pub fn run(cmd: CacheCommand) -> anyhow::Result<()> {
    match cmd {
        CacheCommand::Fetch {
            store,
            cert,
            issuer,
            anchor,
        } => {
            let issuer_der = read(&issuer)?;
            let trusted = if anchor.is_empty() {
                vec![read_cert(&issuer)?]
            } else {
                anchors(&anchor)?
            };
            let cache = open(&store.store, trusted)?;
            let row = cache.lookup_or_fetch(&read(&cert)?, &issuer_der, now(), &HttpTransport::default())?;
            println!(
                "id={} serial_number={} cert_status={} next_update={} ocsp_url={}",
                row.id, row.serial_number, row.cert_status, row.next_update, row.ocsp_url
            );
        }
        CacheCommand::Staple { store, serial, out } => {
            let cache = open(&store.store, Vec::new())?;
            let staple = cache.get_staple(&serial, now())?;
            if staple.stale {
                eprintln!("warning: staple for {serial} is past next_update {}", staple.entry.next_update);
            }
            match out {
                Some(path) => {
                    std::fs::write(&path, &staple.der).with_context(|| format!("writing {}", path.display()))?
                }
                None => print!("{}", pem::encode(pem::OCSP_RESPONSE, &staple.der)),
            }
        }
        CacheCommand::Maintain { store, anchor, every } => {
            let cache = open(&store.store, anchors(&anchor)?)?;
            let transport = HttpTransport::default();
            loop {
                let report = cache.maintain(now(), &transport)?;
                println!(
                    "checked={} updated={} skipped={} failed={}",
                    report.checked,
                    report.updated.len(),
                    report.skipped.len(),
                    report.failed.len()
                );
                for (id, err) in &report.failed {
                    eprintln!("row {id}: {err}");
                }
                match every {
                    Some(d) => std::thread::sleep(d.to_std()?),
                    None => break,
                }
            }
        }
        CacheCommand::Export { store } => {
            print!("{}", open(&store.store, Vec::new())?.export_table());
        }
    }
    Ok(())
}

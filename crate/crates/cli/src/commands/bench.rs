use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Context};
use staplegrid_bench::{bench_requests, measure_frame, request_bodies, BenchConfig, BenchError, FrameMeasurement, Testbed};
use staplegrid_core::ca::{ISSUED_DIR, ROOT_CERT};
use staplegrid_core::transport::HttpTransport;

use super::{append_line, now, read_cert};
use crate::args::BenchCommand;

const FRAME_NONCE: [u8; 16] = *b"staplegrid-frame";

fn report(path: Option<&Path>, line: &str) -> anyhow::Result<()> {
    println!("{line}");
    match path {
        Some(p) => append_line(p, line),
        None => Ok(()),
    }
}

fn issued_serials(dir: &Path) -> anyhow::Result<Vec<staplegrid_core::SerialNumber>> {
    let issued = dir.join(ISSUED_DIR);
    let mut serials = Vec::new();
    for entry in std::fs::read_dir(&issued).with_context(|| format!("listing {}", issued.display()))? {
        serials.push(read_cert(&entry?.path())?.serial_number);
    }
    serials.sort();
    Ok(serials)
}

fn print_frame(m: &FrameMeasurement, path: Option<&Path>) -> anyhow::Result<()> {
    println!(
        "request_bytes={} response_bytes={} total_bytes={}",
        m.request_bytes, m.response_bytes, m.total_bytes
    );
    report(path, &m.to_json_line())
}

pub fn run(cmd: BenchCommand) -> anyhow::Result<()> {
    match cmd {
        BenchCommand::Requests {
            requests,
            workers,
            endpoint,
            ca_dir,
            blacklist,
            seed,
            report: report_path,
        } => {
            let local;
            let (url, bodies, config) = match endpoint {
                Some(url) => {
                    let Some(dir) = ca_dir else {
                        bail!("--endpoint needs --ca-dir for anchors and serials");
                    };
                    let root = read_cert(&dir.join(ROOT_CERT))?;
                    let serials = issued_serials(&dir)?;
                    if serials.is_empty() {
                        bail!("{} has no issued certificates to query", dir.display());
                    }
                    let bodies = request_bodies(&root, &serials, seed);
                    let config = BenchConfig {
                        requests,
                        workers,
                        anchors: vec![root],
                        now: now(),
                        timeout: Duration::from_secs(10),
                    };
                    (url, bodies, config)
                }
                None => {
                    eprintln!("starting local responder with {blacklist} revoked certificates");
                    local = Testbed::start(seed, blacklist, blacklist.max(1))?;
                    (local.endpoint(), local.bodies(seed), local.bench_config(requests, workers))
                }
            };
            match bench_requests(&url, &bodies, &config) {
                Ok(r) => {
                    eprintln!("{}", r.summary());
                    report(report_path.as_deref(), &r.to_json_line())?;
                }
                Err(BenchError::Aborted {
                    failures,
                    partial,
                    first_error,
                }) => {
                    eprintln!("{}", partial.summary());
                    report(report_path.as_deref(), &partial.to_json_line())?;
                    bail!("aborted after {failures} failures; first: {first_error}");
                }
                Err(e) => return Err(e.into()),
            }
        }
        BenchCommand::Frame {
            endpoint,
            cert,
            issuer,
            no_nonce,
            report: report_path,
        } => {
            let nonce = (!no_nonce).then_some(&FRAME_NONCE[..]);
            let http = HttpTransport::default();
            let m = match (endpoint, cert, issuer) {
                (Some(url), Some(cert), Some(issuer)) => {
                    let (cert, issuer) = (read_cert(&cert)?, read_cert(&issuer)?);
                    measure_frame(&http, &url, &cert, &issuer, nonce, now())?
                }
                _ => {
                    let bed = Testbed::start_delegated(1, 3, 1)?;
                    measure_frame(&http, &bed.endpoint(), &bed.good[0], bed.root(), nonce, bed.now())?
                }
            };
            print_frame(&m, report_path.as_deref())?;
        }
    }
    Ok(())
}

pub mod bench;
pub mod ca;
pub mod cache;
pub mod responder;
pub mod sc;
pub mod sim;

use std::path::Path;

use anyhow::Context;
use staplegrid_core::codec::load_certificate;
use staplegrid_core::{CertMeta, Clock, SystemClock, Timestamp};

pub fn now() -> Timestamp {
    SystemClock.now()
}

pub fn read(path: &Path) -> anyhow::Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

pub fn read_cert(path: &Path) -> anyhow::Result<CertMeta> {
    load_certificate(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn append_line(path: &Path, line: &str) -> anyhow::Result<()> {
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    writeln!(f, "{line}").with_context(|| format!("writing {}", path.display()))
}

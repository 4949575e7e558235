use std::path::Path;

use anyhow::{bail, Context};
use staplegrid_core::collection::{build_collection, status_at, verify_collection, BitStatus, SignedCollection};
use staplegrid_core::EcdsaKey;

use super::{now, read, read_cert};
use crate::args::ScCommand;

fn load(path: &Path) -> anyhow::Result<SignedCollection> {
    SignedCollection::from_bytes(&read(path)?).with_context(|| format!("decoding {}", path.display()))
}

fn revoked_indices(path: &Path, bits: u64) -> anyhow::Result<Vec<u64>> {
    let text = String::from_utf8(read(path)?).context("revoked index file is not UTF-8")?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let i: u64 = line
            .parse()
            .with_context(|| format!("{} line {}: bad index {line:?}", path.display(), n + 1))?;
        if i >= bits {
            bail!("{} line {}: index {i} outside 0..{bits}", path.display(), n + 1);
        }
        out.push(i);
    }
    Ok(out)
}

pub fn run(cmd: ScCommand) -> anyhow::Result<()> {
    match cmd {
        ScCommand::Build {
            name,
            bits,
            revoked,
            key,
            out,
        } => {
            let key_text = String::from_utf8(read(&key)?).context("key is not PEM")?;
            let key = EcdsaKey::from_pkcs8_pem(&key_text)?;
            let mut statuses = vec![false; usize::try_from(bits)?];
            if let Some(path) = revoked {
                for i in revoked_indices(&path, bits)? {
                    statuses[i as usize] = true;
                }
            }
            let sc = build_collection(&name, &statuses, now(), &key)?;
            std::fs::write(&out, sc.to_bytes()).with_context(|| format!("writing {}", out.display()))?;
            println!(
                "{}: {} bits, {} revoked, {} bytes",
                sc.name,
                sc.bit_count,
                sc.revoked_count(),
                sc.to_bytes().len()
            );
        }
        ScCommand::Check { file, index } => {
            let status = status_at(&load(&file)?, index)?;
            println!(
                "{index}: {}",
                match status {
                    BitStatus::Revoked => "REVOKED",
                    BitStatus::Valid => "VALID",
                }
            );
        }
        ScCommand::Verify { file, cert } => {
            let sc = load(&file)?;
            if !verify_collection(&sc, &read_cert(&cert)?.public_key_info) {
                bail!("{}: signature INVALID", sc.name);
            }
            println!("{}: signature OK", sc.name);
        }
        ScCommand::Dump { file } => print!("{}", load(&file)?.dump()),
    }
    Ok(())
}

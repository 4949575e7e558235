use anyhow::{bail, Context};
use staplegrid_core::ca::{write_crl, ROOT_CERT, ROOT_KEY};
use staplegrid_core::{generate_root, AuthorityState, CertProfile, DistinguishedName};

use super::now;
use crate::args::CaCommand;

pub fn run(cmd: CaCommand) -> anyhow::Result<()> {
    match cmd {
        CaCommand::Init {
            ca,
            subject,
            seed,
            force,
        } => {
            if ca.dir.join(ROOT_KEY).exists() && !force {
                bail!("{} already holds a root; pass --force to replace it", ca.dir.display());
            }
            let dn: DistinguishedName = subject.parse().context("--subject")?;
            let mut state = generate_root(&dn, now(), seed)?;
            state.save(&ca.dir)?;
            write_crl(&ca.dir, &state.emit_crl(now())?)?;
            println!(
                "root {} ({}) written to {}",
                state.root_cert().serial_number,
                dn,
                ca.dir.join(ROOT_CERT).display()
            );
        }
        CaCommand::Issue {
            ca,
            subject,
            aia,
            crl_dp,
            days,
            serial,
            ocsp_signing,
            key_out,
        } => {
            let mut state = AuthorityState::load(&ca.dir, None)?;
            let mut profile = CertProfile::new(subject.parse().context("--subject")?).validity_days(days);
            if let Some(url) = aia {
                profile = profile.aia(url);
            }
            if let Some(url) = crl_dp {
                profile = profile.crl_dp(url);
            }
            if let Some(s) = serial {
                profile = profile.serial(s);
            }
            if ocsp_signing {
                profile = profile.ocsp_signing();
            }
            let (cert, key) = state.issue_with_key(&profile, now())?;
            state.save(&ca.dir)?;
            if let Some(path) = key_out {
                std::fs::write(&path, key.to_pkcs8_pem())
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            eprintln!("issued serial {}", cert.serial_number);
            print!("{}", cert.to_pem());
        }
        CaCommand::Revoke { ca, serial, reason } => {
            let mut state = AuthorityState::load(&ca.dir, None)?;
            state.revoke(&serial, reason, now())?;
            let crl = state.emit_crl(now())?;
            write_crl(&ca.dir, &crl)?;
            println!(
                "revoked {serial} ({reason}); CRL #{} lists {} entries",
                state.crl_number(),
                crl.entries.len()
            );
        }
        CaCommand::Crl { ca, next_update, text } => {
            let mut state = AuthorityState::load(&ca.dir, None)?;
            let at = now();
            let crl = state.emit_crl_until(at, next_update.map(|d| at + d))?;
            write_crl(&ca.dir, &crl)?;
            if text {
                print!("{}", crl.to_text());
            } else {
                print!("{}", crl.to_pem());
            }
        }
    }
    Ok(())
}

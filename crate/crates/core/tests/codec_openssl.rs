//! Decoding artifacts produced by OpenSSL, checked against OpenSSL's own text
//! dumps of the same files.

mod common;

use common::{dump_values, fixture, fixture_text, openssl_time, ts, unhex};
use staplegrid_core::codec::{
    compute_cert_id, decode_ocsp_request, decode_ocsp_response, encode_ocsp_request,
    load_certificate, parse_crl, verify_ocsp_signature, CertStatus, CodecError, CrlEncoding,
    HashAlg, RevocationReason, SerialNumber,
};

const FIG3_SERIALS: [&str; 3] = ["221A0A99711F9968", "308C707EA89F47A5", "5238F3475665F7C4"];

#[test]
fn crl_matches_openssl_dump() {
    let crl = parse_crl(&fixture("crl.der"), CrlEncoding::Der).unwrap();
    let dump = fixture_text("crl.txt");

    let serials: Vec<String> = crl.entries.iter().map(|e| e.serial_number.to_hex()).collect();
    assert_eq!(serials, dump_values(&dump, "Serial Number:"));
    assert_eq!(serials, FIG3_SERIALS);
    let reasons = dump_values(&dump, "Key Compromise");
    assert_eq!(reasons.len(), 3);
    assert!(crl
        .entries
        .iter()
        .all(|e| e.reason == RevocationReason::KeyCompromise));
    for (e, date) in crl.entries.iter().zip(dump_values(&dump, "Revocation Date:")) {
        assert_eq!(e.revocation_date, openssl_time(&date));
    }
    assert_eq!(
        crl.last_update,
        openssl_time(&dump_values(&dump, "Last Update:")[0])
    );
    assert_eq!(
        crl.next_update,
        Some(openssl_time(&dump_values(&dump, "Next Update:")[0]))
    );
    let number_line = dump
        .lines()
        .skip_while(|l| !l.contains("CRL Number"))
        .nth(1)
        .unwrap()
        .trim()
        .to_string();
    assert_eq!(crl.crl_number.unwrap().to_string(), number_line);
    assert_eq!(crl.issuer_dn.to_string(), "C=aa, ST=aa, L=aa, O=aa, OU=aa, CN=rootca");
}

#[test]
fn crl_rsa_signature_and_pem_form() {
    let ca = load_certificate(&fixture("ca.pem")).unwrap();
    let crl = parse_crl(&fixture("crl.der"), CrlEncoding::Der).unwrap();
    crl.verify_signature(&ca).unwrap();

    let from_pem = parse_crl(crl.to_pem().as_bytes(), CrlEncoding::Pem).unwrap();
    assert_eq!(from_pem, crl);

    let mut tampered = fixture("crl.der");
    let pos = tampered
        .windows(8)
        .position(|w| w == unhex(FIG3_SERIALS[1]).as_slice())
        .unwrap();
    tampered[pos + 7] ^= 0x01;
    let bad = parse_crl(&tampered, CrlEncoding::Der).unwrap();
    assert_eq!(bad.verify_signature(&ca), Err(CodecError::SignatureInvalid));

    let leaf = load_certificate(&fixture("leaf.pem")).unwrap();
    assert_eq!(crl.verify_signature(&leaf), Err(CodecError::IssuerMismatch));
}

#[test]
fn text_rendering_lists_fig3_entries() {
    let crl = parse_crl(&fixture("crl.der"), CrlEncoding::Der).unwrap();
    let text = crl.to_text();
    for s in FIG3_SERIALS {
        assert!(text.contains(&format!("Serial Number: {s}")), "{text}");
    }
    assert_eq!(text.matches("Key Compromise").count(), 3);
    assert!(text.contains("Last Update: May  4 19:57:27 2023 GMT"));
    assert!(text.contains("Issuer: C=aa, ST=aa, L=aa, O=aa, OU=aa, CN=rootca"));
}

#[test]
fn certificate_matches_openssl_dump() {
    let leaf = load_certificate(&fixture("leaf.pem")).unwrap();
    let dump = fixture_text("leaf.txt");
    let serial_line = &dump_values(&dump, "Serial Number:")[0];
    let hex = serial_line.split("(0x").nth(1).unwrap().trim_end_matches(')');
    assert_eq!(leaf.serial_number, SerialNumber::from_hex(hex).unwrap());
    assert_eq!(
        leaf.serial_number.to_decimal(),
        serial_line.split_whitespace().next().unwrap()
    );
    assert_eq!(leaf.not_before, openssl_time(&dump_values(&dump, "Not Before:")[0]));
    assert_eq!(leaf.not_after, openssl_time(&dump_values(&dump, "Not After :")[0]));
    let ocsp = &dump_values(&dump, "OCSP - URI:")[0];
    assert_eq!(leaf.aia_ocsp_url.as_deref(), Some(ocsp.as_str()));
    let crl_dp = dump_values(&dump, "URI:");
    assert_eq!(leaf.crl_dp_url.as_deref(), Some(crl_dp[0].as_str()));
    assert!(!leaf.is_ca);
    assert_eq!(leaf.subject_dn.common_name().as_deref(), Some("meter-0042"));

    let ca = load_certificate(&fixture("ca.pem")).unwrap();
    assert!(ca.is_ca);
    assert!(ca.is_self_signed());
    leaf.verify_issued_by(&ca).unwrap();
    assert_eq!(leaf.verify_issued_by(&leaf), Err(CodecError::IssuerMismatch));

    let signer = load_certificate(&fixture("signer.pem")).unwrap();
    assert!(signer.ocsp_signing);
    assert!(!leaf.ocsp_signing);
}

#[test]
fn request_cert_ids_and_nonce_match_openssl() {
    let der = fixture("req_nonce.der");
    let req = decode_ocsp_request(&der).unwrap();
    let dump = fixture_text("req_nonce.txt");

    let serials = dump_values(&dump, "Serial Number:");
    let name_hashes = dump_values(&dump, "Issuer Name Hash:");
    let key_hashes = dump_values(&dump, "Issuer Key Hash:");
    assert_eq!(req.cert_ids.len(), serials.len());
    for (i, id) in req.cert_ids.iter().enumerate() {
        assert_eq!(id.hash_alg, HashAlg::Sha1);
        assert_eq!(id.serial_number.to_hex(), serials[i]);
        assert_eq!(id.issuer_name_hash, unhex(&name_hashes[i]));
        assert_eq!(id.issuer_key_hash, unhex(&key_hashes[i]));
    }
    // The dump shows the extension value: an OCTET STRING header, then the nonce.
    let ext_value = unhex(
        dump.lines()
            .skip_while(|l| !l.contains("OCSP Nonce"))
            .nth(1)
            .unwrap(),
    );
    assert_eq!(&ext_value[..2], &[0x04, (ext_value.len() - 2) as u8]);
    assert_eq!(req.nonce.as_deref(), Some(&ext_value[2..]));

    assert_eq!(encode_ocsp_request(&req).unwrap(), der);
    let plain = fixture("req_plain.der");
    let plain_req = decode_ocsp_request(&plain).unwrap();
    assert_eq!(plain_req.nonce, None);
    assert_eq!(encode_ocsp_request(&plain_req).unwrap(), plain);
}

#[test]
fn cert_id_computation_matches_openssl() {
    let leaf = load_certificate(&fixture("leaf.pem")).unwrap();
    let ca_der = load_certificate(&fixture("ca.pem")).unwrap().raw_der;
    let req = decode_ocsp_request(&fixture("req_plain.der")).unwrap();
    assert_eq!(compute_cert_id(&leaf, &ca_der, HashAlg::Sha1).unwrap(), req.cert_ids[0]);

    let sha256 = compute_cert_id(&leaf, &ca_der, HashAlg::Sha256).unwrap();
    assert_eq!(sha256.issuer_name_hash.len(), 32);
    assert_eq!(sha256.issuer_key_hash.len(), 32);
    assert_ne!(sha256, req.cert_ids[0]);

    let leaf_der = leaf.raw_der.clone();
    assert_eq!(
        compute_cert_id(&leaf, &leaf_der, HashAlg::Sha1),
        Err(CodecError::IssuerMismatch)
    );
}

#[test]
fn ca_signed_response_matches_openssl_dump() {
    let ca = load_certificate(&fixture("ca.pem")).unwrap();
    let resp = decode_ocsp_response(&fixture("resp_ca.der")).unwrap();
    let dump = fixture_text("resp_ca.txt");
    let req = decode_ocsp_request(&fixture("req_nonce.der")).unwrap();

    let statuses = dump_values(&dump, "Cert Status:");
    let singles = resp.single_responses();
    assert_eq!(singles.len(), statuses.len());
    for (s, want) in singles.iter().zip(&statuses) {
        assert_eq!(s.status.label().to_ascii_lowercase(), *want);
    }
    match singles[1].status {
        CertStatus::Revoked {
            revocation_time,
            reason,
        } => {
            assert_eq!(reason, RevocationReason::KeyCompromise);
            assert_eq!(
                revocation_time,
                openssl_time(&dump_values(&dump, "Revocation Time:")[0])
            );
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(
        resp.produced_at(),
        Some(openssl_time(&dump_values(&dump, "Produced At:")[0]))
    );
    let this = openssl_time(&dump_values(&dump, "This Update:")[0]);
    let next = openssl_time(&dump_values(&dump, "Next Update:")[0]);
    assert_eq!(singles[0].this_update, this);
    assert_eq!(singles[0].next_update, Some(next));

    let verified = verify_ocsp_signature(&resp, &[ca.clone()], this).unwrap();
    assert_eq!(verified.nonce_echo(), req.nonce.as_deref());
    assert!(verified.find(&req.cert_ids[1]).is_some());

    // Signer validity is checked against the supplied time.
    assert!(matches!(
        verify_ocsp_signature(&resp, &[ca], ts(2040, 1, 1, 0, 0, 0)),
        Err(CodecError::SignerCertExpired(_))
    ));
}

#[test]
fn delegated_response_needs_chain_to_anchor() {
    let ca = load_certificate(&fixture("ca.pem")).unwrap();
    let leaf = load_certificate(&fixture("leaf.pem")).unwrap();
    let resp = decode_ocsp_response(&fixture("resp_delegated.der")).unwrap();
    let basic = resp.basic.as_ref().unwrap();
    assert_eq!(basic.signer_certs.len(), 1);
    let now = ts(2026, 10, 19, 0, 0, 0);

    verify_ocsp_signature(&resp, &[ca], now).unwrap();
    assert_eq!(
        verify_ocsp_signature(&resp, &[leaf], now).err(),
        Some(CodecError::UntrustedSigner)
    );
}

//! OCSP stapling toolkit: DER codec, fixture CA, OCSP responder, client-side
//! staple cache, signed revocation collections and a handshake simulator.

pub mod ca;
pub mod cache;
pub mod clock;
pub mod codec;
pub mod collection;
pub mod der;
pub mod responder;
pub mod sim;
pub mod transport;

pub use ca::{generate_root, AuthorityState, CaError, CertProfile};
pub use clock::{parse_duration, Clock, ManualClock, SystemClock};
pub use codec::{
    CertId, CertMeta, CertStatus, CodecError, CrlSnapshot, DistinguishedName, EcdsaKey, HashAlg,
    OcspRequest, OcspResponse, ResponseStatus, RevocationReason, SerialNumber, Signer, Timestamp,
};

use std::path::PathBuf;

use chrono::Duration;
use clap::{Args, Parser, Subcommand};
use staplegrid_core::sim::Mode;
use staplegrid_core::{RevocationReason, SerialNumber};

fn duration(s: &str) -> Result<Duration, String> {
    staplegrid_core::parse_duration(s)
        .filter(|d| *d > Duration::zero())
        .ok_or_else(|| format!("bad duration {s:?} (e.g. 30s, 12h, 7d)"))
}

#[derive(Parser, Debug)]
#[command(name = "staplegrid", version, about = "OCSP stapling and revocation toolkit for device fleets")]
pub struct Cli {
    /// `key = value` file; entries become STAPLEGRID_<KEY> defaults
    #[arg(long, global = true, env = "STAPLEGRID_CONFIG")]
    pub config: Option<PathBuf>,

    /// Log filter, e.g. `info` or `staplegrid_core=debug`
    #[arg(long, global = true, env = "STAPLEGRID_LOG", default_value = "warn")]
    pub log: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fixture certificate authority
    #[command(subcommand)]
    Ca(CaCommand),
    /// CRL-backed OCSP responder
    #[command(subcommand)]
    Responder(ResponderCommand),
    /// Client-side staple cache
    #[command(subcommand)]
    Cache(CacheCommand),
    /// Signed revocation collections
    #[command(subcommand)]
    Sc(ScCommand),
    /// Handshake simulator
    #[command(subcommand)]
    Sim(SimCommand),
    /// Latency and frame-size measurements
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Args, Debug)]
pub struct CaDir {
    /// CA state directory
    #[arg(long = "ca-dir", env = "STAPLEGRID_CA_DIR")]
    pub dir: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum CaCommand {
    /// Create a root key, certificate and empty CRL
    Init {
        #[command(flatten)]
        ca: CaDir,
        #[arg(long, default_value = "O=Staplegrid, CN=Staplegrid Root")]
        subject: String,
        /// Deterministic key and serial generation
        #[arg(long)]
        seed: Option<u64>,
        /// Overwrite an existing root
        #[arg(long)]
        force: bool,
    },
    /// Issue an end-entity certificate; PEM goes to stdout
    Issue {
        #[command(flatten)]
        ca: CaDir,
        #[arg(long)]
        subject: String,
        /// OCSP URL for the AIA extension
        #[arg(long, env = "STAPLEGRID_OCSP_URL")]
        aia: Option<String>,
        #[arg(long)]
        crl_dp: Option<String>,
        #[arg(long, default_value_t = 365)]
        days: u32,
        /// Hex serial; random when omitted
        #[arg(long)]
        serial: Option<SerialNumber>,
        /// Mark as a delegated OCSP signer
        #[arg(long)]
        ocsp_signing: bool,
        /// Write the subject's PKCS#8 key here
        #[arg(long)]
        key_out: Option<PathBuf>,
    },
    /// Revoke a serial and publish a new CRL
    Revoke {
        #[command(flatten)]
        ca: CaDir,
        #[arg(long)]
        serial: SerialNumber,
        #[arg(long, default_value = "unspecified")]
        reason: RevocationReason,
    },
    /// Sign a fresh CRL
    Crl {
        #[command(flatten)]
        ca: CaDir,
        /// Include nextUpdate this far ahead
        #[arg(long, value_parser = duration)]
        next_update: Option<Duration>,
        /// Print the decoded CRL instead of PEM
        #[arg(long)]
        text: bool,
    },
}

#[derive(Subcommand, Debug)]
pub enum ResponderCommand {
    /// Serve OCSP and CRL endpoints until interrupted
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    /// Take issuer, key and CRL from a CA state directory
    #[arg(long = "ca-dir", env = "STAPLEGRID_CA_DIR")]
    pub ca_dir: Option<PathBuf>,
    #[arg(long)]
    pub listen: Option<String>,
    /// CRL file path or http(s) URL
    #[arg(long)]
    pub crl_source: Option<String>,
    #[arg(long)]
    pub issuer_cert: Option<PathBuf>,
    #[arg(long)]
    pub signing_key: Option<PathBuf>,
    #[arg(long)]
    pub signer_cert: Option<PathBuf>,
    #[arg(long)]
    pub refresh_interval: Option<String>,
    #[arg(long)]
    pub response_validity: Option<String>,
}

#[derive(Args, Debug)]
pub struct Store {
    /// Cache store file
    #[arg(long, env = "STAPLEGRID_CACHE_STORE")]
    pub store: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum CacheCommand {
    /// Fetch and store a verified response for a certificate
    Fetch {
        #[command(flatten)]
        store: Store,
        #[arg(long)]
        cert: PathBuf,
        #[arg(long)]
        issuer: PathBuf,
        /// Trusted responder roots; defaults to the issuer
        #[arg(long)]
        anchor: Vec<PathBuf>,
    },
    /// Write the cached response for a serial
    Staple {
        #[command(flatten)]
        store: Store,
        #[arg(long)]
        serial: SerialNumber,
        /// DER output file; PEM on stdout otherwise
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Refresh rows expiring within seven days
    Maintain {
        #[command(flatten)]
        store: Store,
        #[arg(long, required = true)]
        anchor: Vec<PathBuf>,
        /// Keep running, one pass per interval
        #[arg(long, value_parser = duration)]
        every: Option<Duration>,
    },
    /// Print every row
    Export {
        #[command(flatten)]
        store: Store,
    },
}

#[derive(Subcommand, Debug)]
pub enum ScCommand {
    /// Build and sign a collection
    Build {
        #[arg(long)]
        name: String,
        #[arg(long, default_value_t = staplegrid_core::collection::DEFAULT_BIT_COUNT)]
        bits: u64,
        /// File of revoked indices, one per line
        #[arg(long)]
        revoked: Option<PathBuf>,
        /// PKCS#8 signing key
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Look up one index
    Check {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        index: u64,
    },
    /// Verify the signature against a certificate's key
    Verify {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        cert: PathBuf,
    },
    /// Print a collection in text form
    Dump {
        #[arg(long)]
        file: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum SimCommand {
    /// Run a generated scenario or a script
    Run {
        /// Scenario script; overrides the generated scenario flags
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value = "stapled")]
        mode: Mode,
        /// Number of client handshakes
        #[arg(short = 'n', long, default_value_t = 100)]
        clients: usize,
        /// Distinct certificates shared round-robin; defaults to one per client
        #[arg(long)]
        certs: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// `@N event`, applied before handshake N
        #[arg(long)]
        fault: Vec<String>,
    },
    /// Replay a captured staple after revocation
    Replay {
        #[arg(long, value_parser = duration, default_value = "8d")]
        advance: Duration,
        #[arg(long)]
        tamper: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Subcommand, Debug)]
pub enum BenchCommand {
    /// Time n OCSP request/response cycles
    Requests {
        #[arg(short = 'n', long, default_value_t = 1000)]
        requests: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Remote responder; a local one is started when omitted
        #[arg(long)]
        endpoint: Option<String>,
        /// With --endpoint: CA directory for anchors and query serials
        #[arg(long = "ca-dir", requires = "endpoint")]
        ca_dir: Option<PathBuf>,
        /// Local responder blacklist size
        #[arg(long, default_value_t = 1000)]
        blacklist: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Append a JSON line here
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Measure the bytes of one query cycle
    Frame {
        #[arg(long, requires_all = ["cert", "issuer"])]
        endpoint: Option<String>,
        #[arg(long)]
        cert: Option<PathBuf>,
        #[arg(long)]
        issuer: Option<PathBuf>,
        /// Omit the request nonce
        #[arg(long)]
        no_nonce: bool,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

//! A deterministic laboratory for studying a bidirectional, state-keeping
//! national Web censor from the outside.
//!
//! The crate is layered bottom-up:
//!
//! - [`netmodel`]: byte-exact IPv4/TCP/UDP/ICMP, DNS, HTTP request and TLS
//!   ClientHello codecs and builders.
//! - [`blocklist`]: anchored-substring blocking rules, single-pass corpus
//!   matching and over-blocking analysis.
//! - [`censorsim`]: a discrete-event virtual network with the filtering
//!   middlebox state machine and simple endpoint behaviors.
//! - [`prober`]: the outside-in measurement engine (two-packet probes,
//!   prefix scans, campaigns with flow discipline and source rotation,
//!   limited-TTL localization).
//! - [`inference`]: active reverse-engineering of the rule behind a censored
//!   name, and corpus impact reports.
//! - [`evasion`]: a strategy DSL, a packet-stream interpreter and an
//!   evaluator that runs strategies against the simulated censor.
//! - [`cli`]: file loaders, run manifests and the `censorlab` command line.

pub mod blocklist;
pub mod censorsim;
pub mod cli;
pub mod evasion;
pub mod inference;
pub mod netmodel;
pub mod prober;
pub mod time;

pub use blocklist::{BlockRule, Blocklists, Protocol};
pub use censorsim::{CensorConfig, Scenario, World};
pub use netmodel::PacketEnvelope;

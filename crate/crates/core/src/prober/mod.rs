//! Outside-in measurement: probes, campaigns, scans and localization.

mod alloc;
mod campaign;
mod localize;
mod probe;
mod scan;

use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::blocklist::Protocol;
use crate::time::Micros;

pub use alloc::{FlowAllocator, DEFAULT_QUARANTINE};
pub use campaign::{demonstrate_flow_reuse, run_campaign, CampaignPlan, CampaignResult, CampaignSummary, Controls};
pub use localize::{localize, Localization};
pub use probe::{
    default_port, InFlight, ProbeJob, Prober, SecondPacket, DEFAULT_SLEEP, DEFAULT_TIMEOUT, SIGNATURE_IP_ID,
};
pub use scan::{scan_prefixes, IpClassification, IpStatus, PrefixFraction, ScanPlan, ScanResult};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProbeError {
    #[error("flow allocator exhausted: every 4-tuple is inside its quarantine window")]
    Backpressure,
    #[error("no active source addresses")]
    NoSources,
    #[error("{0} is not in the source pool")]
    UnknownSource(Ipv4Addr),
    #[error("invalid plan: {0}")]
    Invalid(String),
    #[error("missing target pool: {0}")]
    NoTargets(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Censored,
    NotCensored,
    Inconclusive,
    SourceBanSuspected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub ip_id: u16,
    pub observed_ttl: u8,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub probe_id: u64,
    pub protocol: Protocol,
    pub domain: String,
    pub target_ip: Ipv4Addr,
    pub target_port: u16,
    pub src_ip: Ipv4Addr,
    pub src_port: u16,
    pub t_sent: Micros,
    pub t_second: Option<Micros>,
    pub t_verdict: Micros,
    pub verdict: Verdict,
    pub evidence: Option<Evidence>,
    /// A genuine endpoint answered.
    pub responsive: bool,
    pub control: bool,
}

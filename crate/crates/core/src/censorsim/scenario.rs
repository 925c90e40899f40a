//! JSON scenario documents: censor config, topology, hosts, and an
//! optional packet script.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use ipnet::Ipv4Net;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blocklist::{BlockRule, Protocol};
use crate::netmodel::dns::{build_dns_query, encode_dns};
use crate::netmodel::http::http_get;
use crate::netmodel::tls::build_client_hello;
use crate::netmodel::{PacketEnvelope, TcpFlags, TcpSegment, UdpDatagram};
use crate::time::{secs, Micros};

use super::config::{CensorConfig, FilteredIps};
use super::endpoints::{DnsResolver, EchoTcp, Endpoint, HttpServer, Unresponsive};
use super::world::{PathSpec, World, DEFAULT_HOP_LATENCY};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid scenario JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}:{line}: {message}")]
    Rule {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Which in-country addresses are filtered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FilterSpec {
    /// Exactly `round(fraction * size)` addresses of the prefix, chosen by
    /// a seeded shuffle.
    Fraction {
        prefix: Ipv4Net,
        fraction: f64,
    },
    Ips {
        ips: Vec<Ipv4Addr>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HostKind {
    HttpServer {
        #[serde(default)]
        ports: Option<Vec<u16>>,
    },
    DnsResolver {
        #[serde(default)]
        zone: BTreeMap<String, Ipv4Addr>,
    },
    EchoTcp,
    Unresponsive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostSpec {
    pub ip: Ipv4Addr,
    #[serde(flatten)]
    pub kind: HostKind,
}

impl HostSpec {
    pub fn endpoint(&self) -> Box<dyn Endpoint> {
        match &self.kind {
            HostKind::HttpServer { ports: Some(p) } => Box::new(HttpServer::new(p.iter().copied())),
            HostKind::HttpServer { ports: None } => Box::new(HttpServer::default()),
            HostKind::DnsResolver { zone } => Box::new(DnsResolver::new(zone.clone())),
            HostKind::EchoTcp => Box::new(EchoTcp::default()),
            HostKind::Unresponsive => Box::new(Unresponsive),
        }
    }
}

fn default_src_port() -> u16 {
    40000
}
fn default_dst_port() -> u16 {
    80
}
fn default_ttl() -> u8 {
    64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "packet", rename_all = "snake_case")]
pub enum ScriptPacket {
    Tcp {
        flags: String,
        #[serde(default)]
        seq: u32,
        #[serde(default)]
        ack: u32,
        #[serde(default)]
        http_get: Option<String>,
        #[serde(default)]
        client_hello: Option<String>,
        #[serde(default)]
        text: Option<String>,
    },
    DnsQuery {
        qname: String,
        #[serde(default)]
        id: u16,
    },
}

/// One packet sent by an outside party at a given virtual time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub t_us: Micros,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    #[serde(default = "default_src_port")]
    pub src_port: u16,
    #[serde(default = "default_dst_port")]
    pub dst_port: u16,
    #[serde(default = "default_ttl")]
    pub ttl: u8,
    #[serde(flatten)]
    pub packet: ScriptPacket,
}

impl ScriptStep {
    pub fn envelope(&self) -> Result<PacketEnvelope, ScenarioError> {
        let mut env = match &self.packet {
            ScriptPacket::Tcp {
                flags,
                seq,
                ack,
                http_get: host,
                client_hello,
                text,
            } => {
                let flags = TcpFlags::from_letters(flags)
                    .ok_or_else(|| ScenarioError::Invalid(format!("bad TCP flags {flags:?}")))?;
                let payload = match (host, client_hello, text) {
                    (Some(h), None, None) => http_get(h).raw,
                    (None, Some(s), None) => build_client_hello(s),
                    (None, None, Some(t)) => t.as_bytes().to_vec(),
                    (None, None, None) => Vec::new(),
                    _ => return Err(ScenarioError::Invalid("at most one TCP payload kind per step".into())),
                };
                let seg = TcpSegment::new(self.src_port, self.dst_port, *seq, *ack, flags).with_payload(payload);
                PacketEnvelope::tcp(self.src, self.dst, seg)
            }
            ScriptPacket::DnsQuery { qname, id } => {
                let q = build_dns_query(qname, *id, None).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
                let payload = encode_dns(&q).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
                PacketEnvelope::udp(
                    self.src,
                    self.dst,
                    UdpDatagram::new(self.src_port, self.dst_port, payload),
                )
            }
        };
        env.ip.ttl = self.ttl;
        env.finalize();
        Ok(env)
    }
}

fn default_latency() -> Micros {
    DEFAULT_HOP_LATENCY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_latency")]
    pub hop_latency_us: Micros,
    #[serde(default)]
    pub censor: CensorConfig,
    /// Rule files merged into the censor's blocklists, relative to the
    /// scenario file.
    #[serde(default)]
    pub blocklist_files: BTreeMap<Protocol, PathBuf>,
    /// When non-empty, replaces `censor.filtered_ips`.
    #[serde(default)]
    pub filtered: Vec<FilterSpec>,
    #[serde(default)]
    pub paths: Vec<PathSpec>,
    #[serde(default)]
    pub hosts: Vec<HostSpec>,
    #[serde(default)]
    pub script: Vec<ScriptStep>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            seed: 0,
            hop_latency_us: DEFAULT_HOP_LATENCY,
            censor: CensorConfig::default(),
            blocklist_files: BTreeMap::new(),
            filtered: Vec::new(),
            paths: Vec::new(),
            hosts: Vec::new(),
            script: Vec::new(),
        }
    }
}

/// Parses a rules file: one canonical rule per line, `#` comments.
pub fn parse_rules_text(text: &str, path: &Path) -> Result<Vec<BlockRule>, ScenarioError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let rule = BlockRule::parse(line).map_err(|e| ScenarioError::Rule {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rule);
    }
    Ok(out)
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a scenario file and resolves its blocklist file references.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|source| ScenarioError::Io {
                path: p.to_path_buf(),
                source,
            })
        };
        let mut s = Scenario::from_json(&read(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for (proto, file) in std::mem::take(&mut s.blocklist_files) {
            let full = base.join(&file);
            let rules = parse_rules_text(&read(&full)?, &full)?;
            s.censor.blocklists.get_mut(proto).extend(rules);
        }
        Ok(s)
    }

    pub fn resolve_filtered(&self) -> Result<FilteredIps, ScenarioError> {
        if self.filtered.is_empty() {
            return Ok(self.censor.filtered_ips.clone());
        }
        let mut set = BTreeSet::new();
        for spec in &self.filtered {
            match spec {
                FilterSpec::Ips { ips } => set.extend(ips.iter().copied()),
                FilterSpec::Fraction { prefix, fraction } => {
                    if !(0.0..=1.0).contains(fraction) {
                        return Err(ScenarioError::Invalid(format!(
                            "fraction {fraction} for {prefix} outside [0, 1]"
                        )));
                    }
                    let mut all = prefix_addresses(prefix);
                    let k = (fraction * all.len() as f64).round() as usize;
                    let salt = u64::from(u32::from(prefix.network())) << 8 | u64::from(prefix.prefix_len());
                    let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ salt);
                    all.shuffle(&mut rng);
                    set.extend(all.into_iter().take(k));
                }
            }
        }
        Ok(FilteredIps::Only(set))
    }

    pub fn build_world(&self) -> Result<World, ScenarioError> {
        let mut config = self.censor.clone();
        config.filtered_ips = self.resolve_filtered()?;
        config.validate().map_err(ScenarioError::Invalid)?;
        let mut w = World::new(config);
        w.hop_latency = self.hop_latency_us;
        for p in &self.paths {
            if p.censor_after > p.hops.len() {
                return Err(ScenarioError::Invalid(format!(
                    "path {}: censor_after beyond last hop",
                    p.prefix
                )));
            }
            w.add_path(p.clone());
        }
        for h in &self.hosts {
            w.add_host(h.ip, h.endpoint());
        }
        Ok(w)
    }

    /// Sends every script step and runs a minute past the last one.
    pub fn run_script(&self, world: &mut World) -> Result<(), ScenarioError> {
        let mut end = 0;
        for step in &self.script {
            world.send_at(step.envelope()?, step.t_us);
            end = end.max(step.t_us);
        }
        world.run_until(end + secs(60));
        Ok(())
    }
}

/// Every address in the prefix, network and broadcast included.
pub fn prefix_addresses(prefix: &Ipv4Net) -> Vec<Ipv4Addr> {
    let start = u32::from(prefix.network());
    let end = u32::from(prefix.broadcast());
    (start..=end).map(Ipv4Addr::from).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{
        "seed": 3,
        "censor": { "blocklists": { "http": [".*twitter\\.com.*"] } },
        "filtered": [ { "prefix": "95.85.96.0/24", "fraction": 0.6555 } ],
        "paths": [ { "prefix": "95.85.96.0/24", "hops": ["10.0.0.1", "10.0.0.2"], "censor_after": 1 } ],
        "hosts": [
            { "ip": "95.85.96.20", "kind": "http_server", "ports": [80] },
            { "ip": "95.85.96.53", "kind": "dns_resolver", "zone": { "example.com": "93.184.216.34" } }
        ],
        "script": [
            { "t_us": 0, "src": "198.51.100.1", "dst": "95.85.96.20", "packet": "tcp", "flags": "PA", "http_get": "twitter.com" }
        ]
    }"#;

    #[test]
    fn parses_and_builds() {
        let s = Scenario::from_json(DOC).unwrap();
        assert_eq!(s.censor.residual_window, secs(30));
        let FilteredIps::Only(set) = s.resolve_filtered().unwrap() else {
            panic!()
        };
        assert_eq!(set.len(), 168);
        let mut w = s.build_world().unwrap();
        s.run_script(&mut w).unwrap();
    }

    #[test]
    fn filtered_choice_is_seeded() {
        let a = Scenario::from_json(DOC).unwrap();
        let mut b = a.clone();
        assert_eq!(a.resolve_filtered().unwrap(), b.resolve_filtered().unwrap());
        b.seed = 4;
        assert_ne!(a.resolve_filtered().unwrap(), b.resolve_filtered().unwrap());
    }
}

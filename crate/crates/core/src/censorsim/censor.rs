use std::collections::{BTreeMap, VecDeque};
use std::net::Ipv4Addr;

use crate::blocklist::Protocol;
use crate::netmodel::dns::{encode_dns, DnsCounts, DnsFlags, DnsMessage, DnsRecord};
use crate::netmodel::{FlowKey, PacketEnvelope, TcpFlags, TcpSegment, UdpDatagram};
use crate::time::Micros;

use super::config::CensorConfig;
use super::lenient::{is_http_request_start, lenient_dns, lenient_http_host, TlsSniff};

pub const FORGED_ADDR: Ipv4Addr = Ipv4Addr::new(127, 0, 0, 1);
const FORGED_TTL: u32 = 300;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tcb {
    pub handshake_seen: bool,
}

/// Per-flow and per-source censor memory. Flow maps use direction-free
/// keys; the stream buffers are per direction.
#[derive(Debug, Clone, Default)]
pub struct CensorState {
    pub tcb: BTreeMap<FlowKey, Tcb>,
    pub residual: BTreeMap<FlowKey, Micros>,
    pub pending: BTreeMap<FlowKey, Micros>,
    pub ignored: BTreeMap<FlowKey, Micros>,
    pub rst_seen: BTreeMap<FlowKey, Micros>,
    pub source_injections: BTreeMap<Ipv4Addr, VecDeque<Micros>>,
    /// Ban expiry per source; `None` never expires.
    pub banned_sources: BTreeMap<Ipv4Addr, Option<Micros>>,
    http_streams: BTreeMap<FlowKey, Vec<u8>>,
    tls_streams: BTreeMap<FlowKey, TlsSniff>,
    pub injections_total: u64,
}

impl CensorState {
    pub fn is_banned(&self, src: Ipv4Addr, t: Micros) -> bool {
        match self.banned_sources.get(&src) {
            Some(None) => true,
            Some(Some(until)) => t < *until,
            None => false,
        }
    }

    fn decay(&mut self, src: Ipv4Addr, t: Micros, window: Micros) {
        if let Some(q) = self.source_injections.get_mut(&src) {
            while q.front().is_some_and(|&x| t.saturating_sub(x) > window) {
                q.pop_front();
            }
        }
    }

    fn record_injection(&mut self, src: Ipv4Addr, t: Micros, config: &CensorConfig) {
        self.injections_total += 1;
        let policy = &config.ban_policy;
        self.source_injections.entry(src).or_default().push_back(t);
        self.decay(src, t, policy.window);
        let n = self.source_injections[&src].len();
        if policy.enabled && n > policy.max_injections_per_source as usize {
            self.banned_sources.insert(src, policy.ban_duration.map(|d| t + d));
        }
    }

    fn forget_streams(&mut self, key: FlowKey) {
        for k in [key, key.reversed()] {
            self.http_streams.remove(&k);
            self.tls_streams.remove(&k);
        }
    }

    /// Feeds a payload-bearing segment to the HTTP and TLS inspectors and
    /// returns a forbidden name found in it.
    fn inspect(&mut self, dir: FlowKey, payload: &[u8], config: &CensorConfig) -> Option<(Protocol, String)> {
        let limit = config.inspect_byte_limit;
        let mut found = None;

        if is_http_request_start(payload) {
            self.http_streams
                .insert(dir, payload[..payload.len().min(limit)].to_vec());
        } else if let Some(buf) = self.http_streams.get_mut(&dir) {
            let room = limit.saturating_sub(buf.len());
            buf.extend_from_slice(&payload[..payload.len().min(room)]);
        }
        if let Some(buf) = self.http_streams.get(&dir) {
            let host = lenient_http_host(buf, limit);
            let head_done = buf.windows(4).any(|w| w == b"\r\n\r\n");
            if host.is_some() || head_done || buf.len() >= limit {
                self.http_streams.remove(&dir);
            }
            if let Some(h) = host {
                if config.blocklists.matches(Protocol::Http, &h) {
                    found = Some((Protocol::Http, h));
                }
            }
        }

        let mut sniff = self.tls_streams.remove(&dir);
        let sni = TlsSniff::feed(&mut sniff, payload, limit);
        if let Some(s) = sniff {
            self.tls_streams.insert(dir, s);
        }
        if let Some(name) = sni {
            if found.is_none() && config.blocklists.matches(Protocol::Https, &name) {
                found = Some((Protocol::Https, name));
            }
        }
        found
    }
}

/// Censor verdict for one packet crossing the censor hop. `inside` is the
/// in-country endpoint of the packet; injections are returned ready to
/// route.
pub fn censor_on_packet(
    state: &mut CensorState,
    config: &CensorConfig,
    env: &PacketEnvelope,
    t: Micros,
    inside: Ipv4Addr,
) -> Vec<PacketEnvelope> {
    if !config.filtered_ips.contains(inside) {
        return Vec::new();
    }
    let outside = if env.ip.src == inside { env.ip.dst } else { env.ip.src };
    if state.is_banned(outside, t) {
        state.decay(outside, t, config.ban_policy.window);
        return Vec::new();
    }
    if let Some(udp) = env.as_udp() {
        let Some(inj) = dns_injection(env, udp, config) else {
            return Vec::new();
        };
        state.record_injection(outside, t, config);
        return vec![inj];
    }
    let Some(seg) = env.as_tcp() else {
        return Vec::new();
    };
    let dir = env.flow().expect("tcp has a flow");
    let key = dir.normalized();
    let flags = seg.flags;

    if flags.intersects(TcpFlags::RST.union(TcpFlags::FIN)) {
        state.tcb.remove(&key);
        state.pending.remove(&key);
        state.forget_streams(key);
        state.ignored.insert(key, t);
        state.rst_seen.insert(key, t);
        return Vec::new();
    }
    if flags.contains(TcpFlags::SYN) && !flags.contains(TcpFlags::ACK) {
        let free_pass = state
            .rst_seen
            .get(&key)
            .is_some_and(|&r| t - r < config.freepass_window);
        if free_pass {
            state.ignored.insert(key, t);
            state.pending.remove(&key);
        } else {
            state.tcb.insert(key, Tcb::default());
            state.ignored.remove(&key);
        }
    } else if flags.contains(TcpFlags::SYN_ACK) {
        if let Some(tcb) = state.tcb.get_mut(&key) {
            tcb.handshake_seen = true;
        }
    }
    if state.ignored.contains_key(&key) {
        return Vec::new();
    }

    let syn = flags.contains(TcpFlags::SYN);
    if let Some(&last) = state.residual.get(&key) {
        if t - last <= config.residual_window {
            state.residual.insert(key, t);
            let inj = rst_injection(env, seg, outside, syn, config);
            state.record_injection(outside, t, config);
            return vec![inj];
        }
        state.residual.remove(&key);
    }

    let inspectable = TcpFlags::PSH
        .union(TcpFlags::FIN)
        .union(TcpFlags::URG)
        .union(TcpFlags::ACK);
    if flags.intersects(inspectable) && !seg.payload.is_empty() && state.inspect(dir, &seg.payload, config).is_some() {
        if state.tcb.get(&key).is_some_and(|tcb| tcb.handshake_seen) {
            state.pending.remove(&key);
            state.residual.insert(key, t);
            let inj = rst_injection(env, seg, outside, syn, config);
            state.record_injection(outside, t, config);
            return vec![inj];
        }
        if state.pending.get(&key).is_some_and(|&t0| t - t0 > config.trigger_max) {
            state.pending.remove(&key);
        }
        state.pending.entry(key).or_insert(t);
    }

    if let Some(&t0) = state.pending.get(&key) {
        let waited = t - t0;
        if waited > config.trigger_max {
            state.pending.remove(&key);
        } else if waited >= config.trigger_min {
            state.pending.remove(&key);
            state.residual.insert(key, t);
            let inj = rst_injection(env, seg, outside, syn, config);
            state.record_injection(outside, t, config);
            return vec![inj];
        }
    }
    Vec::new()
}

/// Forged reset toward the outside party of the flow.
fn rst_injection(
    env: &PacketEnvelope,
    seg: &TcpSegment,
    outside: Ipv4Addr,
    syn: bool,
    config: &CensorConfig,
) -> PacketEnvelope {
    let flags = if syn { TcpFlags::RST_ACK } else { TcpFlags::RST };
    let consumed = seg.payload.len() as u32 + u32::from(syn) + u32::from(seg.flags.contains(TcpFlags::FIN));
    let rst = if env.ip.src == outside {
        PacketEnvelope::tcp(
            env.ip.dst,
            env.ip.src,
            TcpSegment::new(
                seg.dst_port,
                seg.src_port,
                seg.ack,
                seg.seq.wrapping_add(consumed),
                flags,
            ),
        )
    } else {
        PacketEnvelope::tcp(
            env.ip.src,
            env.ip.dst,
            TcpSegment::new(
                seg.src_port,
                seg.dst_port,
                seg.seq.wrapping_add(consumed),
                seg.ack,
                flags,
            ),
        )
    };
    stamp(rst, config)
}

fn stamp(mut env: PacketEnvelope, config: &CensorConfig) -> PacketEnvelope {
    env.ip.identification = config.injection_ip_id;
    env.ip.ttl = config.injection_ttl;
    env.finalize_ip();
    env
}

fn dns_injection(env: &PacketEnvelope, udp: &UdpDatagram, config: &CensorConfig) -> Option<PacketEnvelope> {
    let query = lenient_dns(&udp.payload)?;
    if query.flags.qr {
        return None;
    }
    let c = query.counts;
    let limit = config.dns_count_threshold;
    if [c.qdcount, c.ancount, c.nscount, c.arcount].iter().any(|&n| n > limit) {
        return None;
    }
    let hit = query
        .questions
        .iter()
        .find(|q| config.blocklists.matches(Protocol::Dns, &q.qname))?;
    let flags = DnsFlags {
        qr: true,
        rd: query.flags.rd,
        ra: true,
        ..DnsFlags::default()
    };
    let legacy = config.legacy_dns_count_bug && c.qdcount == 1 && query.questions.len() == 2;
    let resp = if legacy {
        DnsMessage {
            id: query.id,
            flags,
            counts: DnsCounts {
                qdcount: 1,
                ancount: 1,
                nscount: 0,
                arcount: 0,
            },
            questions: query.questions.clone(),
            answers: query
                .questions
                .iter()
                .map(|q| DnsRecord::a(&q.qname, FORGED_ADDR, FORGED_TTL))
                .collect(),
        }
    } else {
        let mut m = DnsMessage {
            id: query.id,
            flags,
            counts: DnsCounts::default(),
            questions: vec![hit.clone()],
            answers: vec![DnsRecord::a(&hit.qname, FORGED_ADDR, FORGED_TTL)],
        };
        m.sync_counts();
        m
    };
    let payload = encode_dns(&resp).ok()?;
    let forged = PacketEnvelope::udp(
        env.ip.dst,
        env.ip.src,
        UdpDatagram::new(udp.dst_port, udp.src_port, payload),
    );
    Some(stamp(forged, config))
}

/// Owns a config and its evolving state.
#[derive(Debug, Clone)]
pub struct Censor {
    pub config: CensorConfig,
    pub state: CensorState,
}

impl Censor {
    pub fn new(config: CensorConfig) -> Self {
        Censor {
            config,
            state: CensorState::default(),
        }
    }

    pub fn on_packet(&mut self, env: &PacketEnvelope, t: Micros, inside: Ipv4Addr) -> Vec<PacketEnvelope> {
        censor_on_packet(&mut self.state, &self.config, env, t, inside)
    }
}

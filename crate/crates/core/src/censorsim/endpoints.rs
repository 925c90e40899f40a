//! Simulated hosts. Each reacts to delivered packets through a [`Ctx`].

use std::any::Any;
use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::blocklist::Protocol;
use crate::netmodel::dns::{decode_dns, encode_dns, DnsFlags, DnsMessage, DnsRecord};
use crate::netmodel::http::strict_http_host;
use crate::netmodel::tls::{server_hello_bytes, strict_tls_sni, CONTENT_HANDSHAKE};
use crate::netmodel::{FlowKey, PacketEnvelope, TcpFlags, TcpSegment, UdpDatagram};
use crate::time::Micros;

pub(crate) enum Action {
    Send { env: PacketEnvelope, delay: Micros },
    Timer { delay: Micros, token: u64 },
}

/// Handle given to endpoints while they process an event.
pub struct Ctx {
    now: Micros,
    ip: Ipv4Addr,
    pub(crate) actions: Vec<Action>,
}

impl Ctx {
    pub(crate) fn new(now: Micros, ip: Ipv4Addr) -> Self {
        Ctx {
            now,
            ip,
            actions: Vec::new(),
        }
    }

    pub fn now(&self) -> Micros {
        self.now
    }

    pub fn ip(&self) -> Ipv4Addr {
        self.ip
    }

    pub fn send(&mut self, env: PacketEnvelope) {
        self.send_after(env, 0);
    }

    pub fn send_after(&mut self, env: PacketEnvelope, delay: Micros) {
        self.actions.push(Action::Send { env, delay });
    }

    pub fn set_timer(&mut self, delay: Micros, token: u64) {
        self.actions.push(Action::Timer { delay, token });
    }
}

pub trait Endpoint: Any {
    fn on_packet(&mut self, ctx: &mut Ctx, env: &PacketEnvelope);
    fn on_timer(&mut self, _ctx: &mut Ctx, _token: u64) {}
    fn as_any(&self) -> &dyn Any;
    fn as_any_mut(&mut self) -> &mut dyn Any;
}

fn seq_lt(a: u32, b: u32) -> bool {
    (a.wrapping_sub(b) as i32) < 0
}

#[derive(Debug, Clone, Default)]
struct Conn {
    irs: u32,
    isn: u32,
    rcv_nxt: u32,
    snd_nxt: u32,
    out_of_order: BTreeMap<u32, Vec<u8>>,
    stream: Vec<u8>,
    done: bool,
}

/// Passive TCP: handshakes, in-order delivery with reassembly, RST for
/// segments on unknown connections. Segments with bad checksums are
/// dropped as a real stack would.
#[derive(Debug, Clone, Default)]
struct Passive {
    conns: BTreeMap<FlowKey, Conn>,
    next_isn: u32,
}

/// New in-order bytes for a connection.
struct Delivery {
    key: FlowKey,
    fresh: usize,
}

fn reply(env: &PacketEnvelope, seg: &TcpSegment, seq: u32, ack: u32, flags: TcpFlags) -> PacketEnvelope {
    PacketEnvelope::tcp(
        env.ip.dst,
        env.ip.src,
        TcpSegment::new(seg.dst_port, seg.src_port, seq, ack, flags),
    )
}

impl Passive {
    fn handle(&mut self, ctx: &mut Ctx, env: &PacketEnvelope) -> Option<Delivery> {
        let seg = env.as_tcp()?;
        if !env.transport_checksum_valid() {
            return None;
        }
        let key = env.flow()?;
        let flags = seg.flags;
        if flags.contains(TcpFlags::RST) {
            self.conns.remove(&key);
            return None;
        }
        if flags.contains(TcpFlags::SYN) && !flags.contains(TcpFlags::ACK) {
            let irs_next = seg.seq.wrapping_add(1);
            let conn = match self.conns.get(&key) {
                Some(c) if c.irs == seg.seq => c.clone(),
                _ => {
                    self.next_isn = self.next_isn.wrapping_add(0x0101_0101);
                    let isn = 0x3000_0000u32.wrapping_add(self.next_isn);
                    let c = Conn {
                        irs: seg.seq,
                        isn,
                        rcv_nxt: irs_next,
                        snd_nxt: isn.wrapping_add(1),
                        ..Default::default()
                    };
                    self.conns.insert(key, c.clone());
                    c
                }
            };
            ctx.send(reply(env, seg, conn.isn, conn.irs.wrapping_add(1), TcpFlags::SYN_ACK));
            return None;
        }
        let Some(conn) = self.conns.get_mut(&key) else {
            let seq = if flags.contains(TcpFlags::ACK) { seg.ack } else { 0 };
            let ack = seg.seq.wrapping_add(seg.payload.len() as u32);
            ctx.send(reply(env, seg, seq, ack, TcpFlags::RST_ACK));
            return None;
        };
        let before = conn.stream.len();
        if !seg.payload.is_empty() {
            conn.out_of_order.entry(seg.seq).or_insert_with(|| seg.payload.clone());
            loop {
                let nxt = conn.rcv_nxt;
                let usable = conn
                    .out_of_order
                    .iter()
                    .find(|(&s, p)| !seq_lt(nxt, s) && seq_lt(nxt, s.wrapping_add(p.len() as u32)))
                    .map(|(&s, _)| s);
                let Some(s) = usable else { break };
                let p = conn.out_of_order.remove(&s).expect("present");
                let skip = nxt.wrapping_sub(s) as usize;
                conn.stream.extend_from_slice(&p[skip..]);
                conn.rcv_nxt = s.wrapping_add(p.len() as u32);
            }
            let nxt = conn.rcv_nxt;
            conn.out_of_order
                .retain(|&s, p| seq_lt(nxt, s.wrapping_add(p.len() as u32)));
        }
        if flags.contains(TcpFlags::FIN) {
            conn.rcv_nxt = conn.rcv_nxt.wrapping_add(1);
        }
        let fresh = conn.stream.len() - before;
        if fresh > 0 || flags.contains(TcpFlags::FIN) {
            ctx.send(reply(env, seg, conn.snd_nxt, conn.rcv_nxt, TcpFlags::ACK));
        }
        (fresh > 0).then_some(Delivery { key, fresh })
    }

    fn respond(&mut self, ctx: &mut Ctx, key: FlowKey, data: &[u8]) {
        let Some(conn) = self.conns.get_mut(&key) else { return };
        let seg = TcpSegment::new(
            key.dst_port,
            key.src_port,
            conn.snd_nxt,
            conn.rcv_nxt,
            TcpFlags::PSH_ACK,
        )
        .with_payload(data.to_vec());
        conn.snd_nxt = conn.snd_nxt.wrapping_add(data.len() as u32);
        ctx.send(PacketEnvelope::tcp(key.dst_ip, key.src_ip, seg));
    }
}

/// A request head the server read off a connection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServedRequest {
    pub t: Micros,
    pub peer: FlowKey,
    pub protocol: Protocol,
    pub raw: Vec<u8>,
    pub host: Option<String>,
}

pub const HTTP_OK: &[u8] = b"HTTP/1.1 200 OK\r\nContent-Length: 2\r\nConnection: close\r\n\r\nok";
pub const HTTP_BAD_REQUEST: &[u8] = b"HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\nConnection: close\r\n\r\n";

/// Web server answering plain HTTP with a canned page and TLS
/// ClientHellos with a canned ServerHello.
#[derive(Debug, Clone)]
pub struct HttpServer {
    pub ports: BTreeSet<u16>,
    pub requests: Vec<ServedRequest>,
    tcp: Passive,
}

impl Default for HttpServer {
    fn default() -> Self {
        HttpServer::new([80, 443])
    }
}

/// End of a request head, tolerating leading blank lines.
fn head_len(stream: &[u8]) -> Option<usize> {
    let start = stream.iter().position(|&b| !matches!(b, b'\r' | b'\n'))?;
    stream[start..]
        .windows(4)
        .position(|w| w == b"\r\n\r\n")
        .map(|p| start + p + 4)
}

impl HttpServer {
    pub fn new(ports: impl IntoIterator<Item = u16>) -> Self {
        HttpServer {
            ports: ports.into_iter().collect(),
            requests: Vec::new(),
            tcp: Passive::default(),
        }
    }

    fn serve(&mut self, ctx: &mut Ctx, key: FlowKey) {
        let conn = &self.tcp.conns[&key];
        if conn.done {
            return;
        }
        let stream = conn.stream.clone();
        let (protocol, raw, host, answer) = if stream.first() == Some(&CONTENT_HANDSHAKE) {
            if stream.len() < 5 {
                return;
            }
            let need = 5 + u16::from_be_bytes([stream[3], stream[4]]) as usize;
            if stream.len() < need {
                return;
            }
            let raw = stream[..need].to_vec();
            let sni = strict_tls_sni(&raw);
            let answer = sni.as_ref().map(|_| server_hello_bytes());
            (Protocol::Https, raw, sni, answer)
        } else {
            let Some(n) = head_len(&stream) else { return };
            let raw = stream[..n].to_vec();
            let host = strict_http_host(&raw);
            let answer = Some(if host.is_some() { HTTP_OK } else { HTTP_BAD_REQUEST }.to_vec());
            (Protocol::Http, raw, host, answer)
        };
        self.tcp.conns.get_mut(&key).expect("present").done = true;
        self.requests.push(ServedRequest {
            t: ctx.now(),
            peer: key,
            protocol,
            raw,
            host,
        });
        if let Some(a) = answer {
            self.tcp.respond(ctx, key, &a);
        }
    }
}

impl Endpoint for HttpServer {
    fn on_packet(&mut self, ctx: &mut Ctx, env: &PacketEnvelope) {
        let Some(seg) = env.as_tcp() else { return };
        if !self.ports.contains(&seg.dst_port) {
            if !seg.flags.contains(TcpFlags::RST) && env.transport_checksum_valid() {
                let ack = seg
                    .seq
                    .wrapping_add(seg.payload.len() as u32 + u32::from(seg.flags.contains(TcpFlags::SYN)));
                ctx.send(reply(env, seg, 0, ack, TcpFlags::RST_ACK));
            }
            return;
        }
        if let Some(d) = self.tcp.handle(ctx, env) {
            debug_assert!(d.fresh > 0);
            self.serve(ctx, d.key);
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Echoes every in-order byte back to the sender.
#[derive(Debug, Clone, Default)]
pub struct EchoTcp {
    tcp: Passive,
}

impl Endpoint for EchoTcp {
    fn on_packet(&mut self, ctx: &mut Ctx, env: &PacketEnvelope) {
        if let Some(d) = self.tcp.handle(ctx, env) {
            let stream = &self.tcp.conns[&d.key].stream;
            let fresh = stream[stream.len() - d.fresh..].to_vec();
            self.tcp.respond(ctx, d.key, &fresh);
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Answers A queries on UDP port 53 from a fixed zone. Only the declared
/// number of questions is read.
#[derive(Debug, Clone, Default)]
pub struct DnsResolver {
    pub zone: BTreeMap<String, Ipv4Addr>,
    pub queries_answered: u64,
}

impl DnsResolver {
    pub fn new(zone: impl IntoIterator<Item = (String, Ipv4Addr)>) -> Self {
        DnsResolver {
            zone: zone.into_iter().map(|(k, v)| (k.to_ascii_lowercase(), v)).collect(),
            queries_answered: 0,
        }
    }
}

impl Endpoint for DnsResolver {
    fn on_packet(&mut self, ctx: &mut Ctx, env: &PacketEnvelope) {
        let Some(udp) = env.as_udp() else { return };
        if udp.dst_port != 53 || !env.transport_checksum_valid() {
            return;
        }
        let Ok(query) = decode_dns(&udp.payload) else { return };
        if query.flags.qr {
            return;
        }
        let n = usize::from(query.counts.qdcount).min(query.questions.len());
        let questions = query.questions[..n].to_vec();
        let answers: Vec<DnsRecord> = questions
            .iter()
            .filter_map(|q| {
                self.zone
                    .get(&q.qname.to_ascii_lowercase())
                    .map(|a| DnsRecord::a(&q.qname, *a, 300))
            })
            .collect();
        let mut resp = DnsMessage {
            id: query.id,
            flags: DnsFlags {
                qr: true,
                rd: query.flags.rd,
                ra: true,
                rcode: if answers.is_empty() { 3 } else { 0 },
                ..DnsFlags::default()
            },
            counts: Default::default(),
            questions,
            answers,
        };
        resp.sync_counts();
        let Ok(payload) = encode_dns(&resp) else { return };
        self.queries_answered += 1;
        ctx.send(PacketEnvelope::udp(
            env.ip.dst,
            env.ip.src,
            UdpDatagram::new(udp.dst_port, udp.src_port, payload),
        ));
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Silently absorbs everything.
#[derive(Debug, Clone, Default)]
pub struct Unresponsive;

impl Endpoint for Unresponsive {
    fn on_packet(&mut self, _ctx: &mut Ctx, _env: &PacketEnvelope) {}

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

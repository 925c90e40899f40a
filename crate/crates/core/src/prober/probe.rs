use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blocklist::Protocol;
use crate::censorsim::{Captured, World, FORGED_ADDR};
use crate::netmodel::dns::{build_dns_query, decode_dns_strict, encode_dns};
use crate::netmodel::http::http_get;
use crate::netmodel::tls::build_client_hello;
use crate::netmodel::{FlowKey, PacketEnvelope, TcpFlags, TcpSegment, Transport, UdpDatagram};
use crate::time::{secs, Micros};

use super::alloc::{FlowAllocator, DEFAULT_QUARANTINE};
use super::{Evidence, ProbeError, ProbeRecord, Verdict};

pub const DEFAULT_SLEEP: Micros = secs(9);
pub const DEFAULT_TIMEOUT: Micros = secs(2);
pub const SIGNATURE_IP_ID: u16 = 30000;

/// Packet sent on the probe flow after the sleep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SecondPacket {
    /// Byte-identical copy of the first packet.
    Copy,
    /// An empty segment with these flags.
    Flags(TcpFlags),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeJob {
    pub protocol: Protocol,
    pub domain: String,
    pub target_ip: Ipv4Addr,
    pub target_port: u16,
    pub sleep: Micros,
    pub second: SecondPacket,
    pub ttl: u8,
    pub src: Option<Ipv4Addr>,
    /// Reuse this exact 4-tuple instead of allocating one.
    pub forced_flow: Option<FlowKey>,
}

impl ProbeJob {
    pub fn new(protocol: Protocol, domain: &str, target_ip: Ipv4Addr) -> Self {
        ProbeJob {
            protocol,
            domain: domain.to_string(),
            target_ip,
            target_port: default_port(protocol),
            sleep: DEFAULT_SLEEP,
            second: SecondPacket::Copy,
            ttl: 64,
            src: None,
            forced_flow: None,
        }
    }
}

pub fn default_port(p: Protocol) -> u16 {
    match p {
        Protocol::Dns => 53,
        Protocol::Http => 80,
        Protocol::Https => 443,
    }
}

/// A launched probe waiting for its replies.
#[derive(Debug, Clone)]
pub struct InFlight {
    pub probe_id: u64,
    pub job: ProbeJob,
    pub flow: FlowKey,
    pub dns_id: u16,
    pub t_sent: Micros,
    pub t_second: Option<Micros>,
    pub deadline: Micros,
}

/// Measurement engine state: flow allocation, pacing and seeded choices.
#[derive(Debug, Clone)]
pub struct Prober {
    pub alloc: FlowAllocator,
    pub timeout: Micros,
    /// Probes launched per virtual second within a batch.
    pub pacing_per_sec: u32,
    rng: ChaCha8Rng,
    next_probe_id: u64,
}

impl Prober {
    pub fn new(sources: Vec<Ipv4Addr>, seed: u64) -> Self {
        Prober {
            alloc: FlowAllocator::new(sources, seed, DEFAULT_QUARANTINE),
            timeout: DEFAULT_TIMEOUT,
            pacing_per_sec: 100,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15),
            next_probe_id: 0,
        }
    }

    pub fn with_allocator(alloc: FlowAllocator, seed: u64) -> Self {
        Prober {
            alloc,
            ..Prober::new(Vec::new(), seed)
        }
    }

    /// Sends the probe's packets, the first at `at`.
    pub fn launch(&mut self, world: &mut World, job: ProbeJob, at: Micros) -> Result<InFlight, ProbeError> {
        let flow = match job.forced_flow {
            Some(f) => {
                self.alloc.force(f, at);
                f
            }
            None => self.alloc.allocate(job.target_ip, job.target_port, at, job.src)?,
        };
        self.next_probe_id += 1;
        let probe_id = self.next_probe_id;
        let mut dns_id = 0;
        let t_second;
        match job.protocol {
            Protocol::Dns => {
                dns_id = self.rng.gen();
                let q = build_dns_query(&job.domain, dns_id, None).map_err(|e| ProbeError::Invalid(e.to_string()))?;
                let payload = encode_dns(&q).map_err(|e| ProbeError::Invalid(e.to_string()))?;
                let mut env = PacketEnvelope::udp(
                    flow.src_ip,
                    flow.dst_ip,
                    UdpDatagram::new(flow.src_port, flow.dst_port, payload),
                );
                env.ip.ttl = job.ttl;
                env.finalize();
                world.send_at(env, at);
                t_second = None;
            }
            Protocol::Http | Protocol::Https => {
                let payload = if job.protocol == Protocol::Http {
                    http_get(&job.domain).raw
                } else {
                    build_client_hello(&job.domain)
                };
                let (seq, ack): (u32, u32) = (self.rng.gen(), self.rng.gen());
                let seg =
                    TcpSegment::new(flow.src_port, flow.dst_port, seq, ack, TcpFlags::PSH_ACK).with_payload(payload);
                let mut first = PacketEnvelope::tcp(flow.src_ip, flow.dst_ip, seg.clone());
                first.ip.ttl = job.ttl;
                first.finalize();
                let second = match job.second {
                    SecondPacket::Copy => first.clone(),
                    SecondPacket::Flags(f) => {
                        let mut e = PacketEnvelope::tcp(
                            flow.src_ip,
                            flow.dst_ip,
                            TcpSegment::new(flow.src_port, flow.dst_port, seq, ack, f),
                        );
                        e.ip.ttl = job.ttl;
                        e.finalize();
                        e
                    }
                };
                world.send_at(first, at);
                world.send_at(second, at + job.sleep);
                t_second = Some(at + job.sleep);
            }
        }
        let deadline = t_second.unwrap_or(at) + self.timeout;
        Ok(InFlight {
            probe_id,
            job,
            flow,
            dns_id,
            t_sent: at,
            t_second,
            deadline,
        })
    }

    /// Classifies what came back on the probe's flow. The world must have
    /// run past the deadline.
    pub fn collect(&mut self, world: &mut World, f: InFlight) -> ProbeRecord {
        let got: Vec<Captured> = world
            .take_captured(&f.flow)
            .into_iter()
            .filter(|c| c.t <= f.deadline && !matches!(c.env.transport, Transport::Icmp(_)))
            .collect();
        let (verdict, evidence, responsive) = match f.job.protocol {
            Protocol::Dns => classify_dns(&got, &f),
            _ => classify_tcp(&got, &f),
        };
        ProbeRecord {
            probe_id: f.probe_id,
            protocol: f.job.protocol,
            domain: f.job.domain,
            target_ip: f.flow.dst_ip,
            target_port: f.flow.dst_port,
            src_ip: f.flow.src_ip,
            src_port: f.flow.src_port,
            t_sent: f.t_sent,
            t_second: f.t_second,
            t_verdict: f.deadline,
            verdict,
            evidence,
            responsive,
            control: false,
        }
    }

    /// Launches jobs paced from the current time, runs the world until
    /// every deadline passes, and returns records in job order.
    pub fn run_jobs(&mut self, world: &mut World, jobs: Vec<ProbeJob>) -> Result<Vec<ProbeRecord>, ProbeError> {
        let interval = 1_000_000 / Micros::from(self.pacing_per_sec.max(1));
        let t0 = world.now();
        let mut flights = Vec::with_capacity(jobs.len());
        for (i, job) in jobs.into_iter().enumerate() {
            flights.push(self.launch(world, job, t0 + i as Micros * interval)?);
        }
        let end = flights.iter().map(|f| f.deadline).max().unwrap_or(t0);
        world.run_until(end);
        Ok(flights.into_iter().map(|f| self.collect(world, f)).collect())
    }

    pub fn run_job(&mut self, world: &mut World, job: ProbeJob) -> Result<ProbeRecord, ProbeError> {
        Ok(self.run_jobs(world, vec![job])?.remove(0))
    }

    /// Single DNS probe. Silence is re-checked with `control`, a
    /// known-blocked domain and a confirmed filtered target, from the same
    /// source.
    pub fn probe_dns(
        &mut self,
        world: &mut World,
        domain: &str,
        target_ip: Ipv4Addr,
        control: Option<(&str, Ipv4Addr)>,
    ) -> Result<ProbeRecord, ProbeError> {
        let rec = self.run_job(world, ProbeJob::new(Protocol::Dns, domain, target_ip))?;
        self.check_silence(world, rec, Protocol::Dns, control)
    }

    /// Single two-packet TCP probe; `sleep` is not range-checked here so
    /// that boundary behavior can be observed.
    #[allow(clippy::too_many_arguments)]
    pub fn probe_tcp(
        &mut self,
        world: &mut World,
        domain: &str,
        protocol: Protocol,
        target_ip: Ipv4Addr,
        target_port: u16,
        sleep: Micros,
        control: Option<(&str, Ipv4Addr)>,
    ) -> Result<ProbeRecord, ProbeError> {
        let job = ProbeJob {
            target_port,
            sleep,
            ..ProbeJob::new(protocol, domain, target_ip)
        };
        let rec = self.run_job(world, job)?;
        self.check_silence(world, rec, protocol, control)
    }

    fn check_silence(
        &mut self,
        world: &mut World,
        mut rec: ProbeRecord,
        protocol: Protocol,
        control: Option<(&str, Ipv4Addr)>,
    ) -> Result<ProbeRecord, ProbeError> {
        let Some((domain, target)) = control else {
            return Ok(rec);
        };
        if rec.verdict != Verdict::NotCensored || rec.responsive {
            return Ok(rec);
        }
        let job = ProbeJob {
            src: Some(rec.src_ip),
            ..ProbeJob::new(protocol, domain, target)
        };
        let c = self.run_job(world, job)?;
        if c.verdict != Verdict::Censored {
            rec.verdict = Verdict::SourceBanSuspected;
        }
        Ok(rec)
    }
}

fn is_signature(env: &PacketEnvelope) -> bool {
    env.ip.identification == SIGNATURE_IP_ID
}

fn evidence(env: &PacketEnvelope, kind: &str) -> Evidence {
    Evidence {
        ip_id: env.ip.identification,
        observed_ttl: env.ip.ttl,
        kind: kind.to_string(),
    }
}

fn classify_dns(got: &[Captured], f: &InFlight) -> (Verdict, Option<Evidence>, bool) {
    let mut responsive = false;
    let mut odd_signature = None;
    for c in got {
        let Some(udp) = c.env.as_udp() else { continue };
        let msg = decode_dns_strict(&udp.payload).filter(|m| m.id == f.dns_id && m.flags.qr);
        if is_signature(&c.env) {
            let forged = msg.as_ref().is_some_and(|m| {
                m.answers.len() == 1
                    && m.answers[0].a_addr() == Some(FORGED_ADDR)
                    && m.answers[0].name.eq_ignore_ascii_case(&f.job.domain)
            });
            if forged {
                return (Verdict::Censored, Some(evidence(&c.env, "dns-a-127.0.0.1")), responsive);
            }
            odd_signature.get_or_insert_with(|| evidence(&c.env, "dns-malformed"));
        } else if msg.is_some() {
            responsive = true;
        }
    }
    match odd_signature {
        Some(e) => (Verdict::Inconclusive, Some(e), responsive),
        None => (Verdict::NotCensored, None, responsive),
    }
}

fn classify_tcp(got: &[Captured], f: &InFlight) -> (Verdict, Option<Evidence>, bool) {
    let t2 = f.t_second.unwrap_or(f.t_sent);
    let rst_kind = |env: &PacketEnvelope| {
        env.as_tcp().and_then(|t| {
            if t.flags.contains(TcpFlags::RST_ACK) {
                Some("rst+ack")
            } else if t.flags.contains(TcpFlags::RST) {
                Some("rst")
            } else {
                None
            }
        })
    };
    for c in got.iter().filter(|c| c.t > t2 && is_signature(&c.env)) {
        if let Some(kind) = rst_kind(&c.env) {
            return (Verdict::Censored, Some(evidence(&c.env, kind)), false);
        }
    }
    let genuine_early = got.iter().any(|c| c.t <= t2 && !is_signature(&c.env));
    if let Some(c) = got.iter().find(|c| is_signature(&c.env)) {
        return (
            Verdict::Inconclusive,
            Some(evidence(&c.env, "signature-after-first")),
            genuine_early,
        );
    }
    if genuine_early {
        return (Verdict::NotCensored, None, true);
    }
    if let Some(c) = got.iter().find(|c| rst_kind(&c.env).is_some()) {
        return (Verdict::Inconclusive, Some(evidence(&c.env, "unsigned-rst")), false);
    }
    let responsive = !got.is_empty();
    (Verdict::NotCensored, None, responsive)
}

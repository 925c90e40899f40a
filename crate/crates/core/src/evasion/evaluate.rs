//! In-lab trials: a baseline connection that must be censored, then the
//! same connection with the strategy applied.

use std::any::Any;
use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blocklist::{Blocklists, Protocol};
use crate::censorsim::{
    CensorConfig, Ctx, DnsResolver, Endpoint, HostKind, HttpServer, PathSpec, Scenario, TraceRecord, World, FORGED_ADDR,
};
use crate::netmodel::dns::{build_dns_query, decode_dns_strict, encode_dns, DnsQuestion};
use crate::netmodel::http::http_get;
use crate::netmodel::tls::build_client_hello;
use crate::netmodel::{PacketEnvelope, TcpFlags, TcpSegment, UdpDatagram};
use crate::prober::SIGNATURE_IP_ID;
use crate::time::{secs, Micros};

use super::dsl::Strategy;
use super::engine::{apply_inbound, apply_outbound};
use super::EvasionError;

const TRIAL_LENGTH: Micros = secs(40);
const GENUINE_ADDR: Ipv4Addr = Ipv4Addr::new(93, 184, 216, 34);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TcpState {
    Closed,
    SynSent,
    Established,
}

/// Outside client that opens one connection, sends one request, and
/// passes its own packets through a strategy.
pub struct TcpClient {
    server: Ipv4Addr,
    sport: u16,
    dport: u16,
    isn: u32,
    request: Vec<u8>,
    strategy: Option<Strategy>,
    rng: ChaCha8Rng,
    state: TcpState,
    pub received: Vec<u8>,
    pub injections: Vec<PacketEnvelope>,
    pub aborted: bool,
    pub errors: Vec<String>,
}

impl TcpClient {
    pub fn new(
        server: Ipv4Addr,
        sport: u16,
        dport: u16,
        request: Vec<u8>,
        strategy: Option<Strategy>,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TcpClient {
            server,
            sport,
            dport,
            isn: rng.gen(),
            request,
            strategy,
            rng,
            state: TcpState::Closed,
            received: Vec::new(),
            injections: Vec::new(),
            aborted: false,
            errors: Vec::new(),
        }
    }

    fn emit(&mut self, ctx: &mut Ctx, seg: TcpSegment) {
        let env = PacketEnvelope::tcp(ctx.ip(), self.server, seg);
        let out = match &self.strategy {
            Some(s) => apply_outbound(s, &env, &mut self.rng),
            None => Ok(vec![super::engine::Scheduled { delay: 0, env }]),
        };
        match out {
            Ok(pkts) => {
                for p in pkts {
                    ctx.send_after(p.env, p.delay);
                }
            }
            Err(e) => self.errors.push(e.to_string()),
        }
    }
}

impl Endpoint for TcpClient {
    fn on_timer(&mut self, ctx: &mut Ctx, _token: u64) {
        if self.state == TcpState::Closed {
            self.state = TcpState::SynSent;
            let seg = TcpSegment::new(self.sport, self.dport, self.isn, 0, TcpFlags::SYN);
            self.emit(ctx, seg);
        }
    }

    fn on_packet(&mut self, ctx: &mut Ctx, env: &PacketEnvelope) {
        let incoming = match &self.strategy {
            Some(s) => match apply_inbound(s, env, &mut self.rng) {
                Ok(v) => v.into_iter().map(|p| p.env).collect(),
                Err(_) => vec![env.clone()],
            },
            None => vec![env.clone()],
        };
        for env in incoming {
            let Some(seg) = env.as_tcp() else { continue };
            if seg.dst_port != self.sport {
                continue;
            }
            if env.ip.identification == SIGNATURE_IP_ID {
                self.injections.push(env.clone());
                if seg.flags.contains(TcpFlags::RST) {
                    self.aborted = true;
                }
                continue;
            }
            if self.aborted {
                continue;
            }
            if seg.flags.contains(TcpFlags::RST) {
                let for_us = match self.state {
                    TcpState::SynSent => seg.flags.contains(TcpFlags::ACK) && seg.ack == self.isn.wrapping_add(1),
                    TcpState::Established => true,
                    TcpState::Closed => false,
                };
                self.aborted |= for_us;
                continue;
            }
            match self.state {
                TcpState::SynSent if seg.flags.contains(TcpFlags::SYN_ACK) && seg.ack == self.isn.wrapping_add(1) => {
                    self.state = TcpState::Established;
                    let (seq, ack) = (self.isn.wrapping_add(1), seg.seq.wrapping_add(1));
                    self.emit(ctx, TcpSegment::new(self.sport, self.dport, seq, ack, TcpFlags::ACK));
                    let req = TcpSegment::new(self.sport, self.dport, seq, ack, TcpFlags::PSH_ACK)
                        .with_payload(self.request.clone());
                    self.emit(ctx, req);
                }
                TcpState::Established if !seg.payload.is_empty() => self.received.extend_from_slice(&seg.payload),
                _ => {}
            }
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Outside stub resolver client; accepts the first response that passes
/// a strict parse.
pub struct DnsClient {
    resolver: Ipv4Addr,
    sport: u16,
    query: Vec<u8>,
    id: u16,
    qname: String,
    strategy: Option<Strategy>,
    rng: ChaCha8Rng,
    pub accepted: Option<(Ipv4Addr, bool)>,
    pub injections: Vec<PacketEnvelope>,
    pub rejected: usize,
    pub errors: Vec<String>,
}

impl DnsClient {
    pub fn new(
        resolver: Ipv4Addr,
        sport: u16,
        qname: &str,
        query: Vec<u8>,
        id: u16,
        strategy: Option<Strategy>,
        seed: u64,
    ) -> Self {
        DnsClient {
            resolver,
            sport,
            query,
            id,
            qname: qname.to_ascii_lowercase(),
            strategy,
            rng: ChaCha8Rng::seed_from_u64(seed),
            accepted: None,
            injections: Vec::new(),
            rejected: 0,
            errors: Vec::new(),
        }
    }
}

impl Endpoint for DnsClient {
    fn on_timer(&mut self, ctx: &mut Ctx, _token: u64) {
        let env = PacketEnvelope::udp(
            ctx.ip(),
            self.resolver,
            UdpDatagram::new(self.sport, 53, self.query.clone()),
        );
        let out = match &self.strategy {
            Some(s) => apply_outbound(s, &env, &mut self.rng),
            None => Ok(vec![super::engine::Scheduled { delay: 0, env }]),
        };
        match out {
            Ok(pkts) => pkts.into_iter().for_each(|p| ctx.send_after(p.env, p.delay)),
            Err(e) => self.errors.push(e.to_string()),
        }
    }

    fn on_packet(&mut self, _ctx: &mut Ctx, env: &PacketEnvelope) {
        let Some(u) = env.as_udp() else { return };
        if u.dst_port != self.sport {
            return;
        }
        let signature = env.ip.identification == SIGNATURE_IP_ID;
        if signature {
            self.injections.push(env.clone());
        }
        if self.accepted.is_some() {
            return;
        }
        let ok = decode_dns_strict(&u.payload).filter(|m| m.id == self.id && m.flags.qr);
        let Some(m) = ok else {
            self.rejected += 1;
            return;
        };
        let addr = m
            .answers
            .iter()
            .find(|a| a.name.eq_ignore_ascii_case(&self.qname))
            .and_then(|a| a.a_addr())
            .unwrap_or(Ipv4Addr::UNSPECIFIED);
        self.accepted = Some((addr, signature));
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

type WorldFactory = Box<dyn Fn() -> Result<World, EvasionError>>;

/// How to build fresh worlds for trials and where the endpoints sit.
pub struct Lab {
    build: WorldFactory,
    pub client: Ipv4Addr,
    pub web_server: Option<Ipv4Addr>,
    pub resolver: Option<Ipv4Addr>,
    pub seed: u64,
    pub trace: bool,
}

impl Lab {
    /// Six-hop path with the censor after hop 3, a web server and a
    /// resolver that knows `zone` names.
    pub fn standard(config: CensorConfig, zone: &[&str]) -> Lab {
        let web = Ipv4Addr::new(95, 85, 96, 80);
        let dns = Ipv4Addr::new(95, 85, 96, 53);
        let zone: Vec<(String, Ipv4Addr)> = zone.iter().map(|n| (n.to_ascii_lowercase(), GENUINE_ADDR)).collect();
        Lab {
            build: Box::new(move || {
                let mut w = World::new(config.clone());
                w.add_path(PathSpec {
                    prefix: "95.85.96.0/24".parse().expect("valid"),
                    hops: (1..=6).map(|i| Ipv4Addr::new(10, 96, 0, i)).collect(),
                    censor_after: 3,
                });
                w.add_host(web, Box::new(HttpServer::default()));
                w.add_host(dns, Box::new(DnsResolver::new(zone.clone())));
                Ok(w)
            }),
            client: Ipv4Addr::new(198, 51, 100, 77),
            web_server: Some(web),
            resolver: Some(dns),
            seed: 0,
            trace: false,
        }
    }

    /// Every host of a blocklist-only config, for tests: the standard lab
    /// with uniform rules.
    pub fn with_rules(rules: impl IntoIterator<Item = crate::blocklist::BlockRule>, zone: &[&str]) -> Lab {
        Lab::standard(CensorConfig::with_blocklists(Blocklists::uniform(rules)), zone)
    }

    pub fn from_scenario(scenario: Scenario, client: Ipv4Addr) -> Lab {
        let web = scenario
            .hosts
            .iter()
            .find(|h| matches!(h.kind, HostKind::HttpServer { .. }))
            .map(|h| h.ip);
        let resolver = scenario
            .hosts
            .iter()
            .find(|h| matches!(h.kind, HostKind::DnsResolver { .. }))
            .map(|h| h.ip);
        let seed = scenario.seed;
        Lab {
            build: Box::new(move || {
                scenario
                    .build_world()
                    .map_err(|e| EvasionError::Scenario(e.to_string()))
            }),
            client,
            web_server: web,
            resolver,
            seed,
            trace: false,
        }
    }

    pub fn world(&self) -> Result<World, EvasionError> {
        (self.build)()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvasionReport {
    pub strategy: String,
    pub protocol: Protocol,
    pub domain: String,
    pub baseline_censored: bool,
    pub with_strategy_delivered: bool,
    /// Censor injections that reached the client during the trial.
    pub injections_observed: usize,
    /// The server read exactly the unmodified request (HTTP/HTTPS).
    pub request_intact: bool,
    pub successful: bool,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
}

struct Outcome {
    censored: bool,
    delivered: bool,
    injections: usize,
    intact: bool,
    trace: Vec<TraceRecord>,
}

/// A client query, optionally built outside the strategy language.
enum Query {
    Standard,
    DuplicateQuestion,
}

fn dns_query(domain: &str, id: u16, kind: &Query) -> Result<Vec<u8>, EvasionError> {
    let mut q = build_dns_query(domain, id, None).map_err(|e| EvasionError::Unsupported(e.to_string()))?;
    if let Query::DuplicateQuestion = kind {
        let dup: DnsQuestion = q.questions[0].clone();
        q.questions.push(dup);
    }
    encode_dns(&q).map_err(|e| EvasionError::Unsupported(e.to_string()))
}

fn run_once(
    lab: &Lab,
    protocol: Protocol,
    domain: &str,
    strategy: Option<&Strategy>,
    query: &Query,
    seed: u64,
) -> Result<Outcome, EvasionError> {
    let mut world = lab.world()?;
    if lab.trace {
        world.enable_trace();
    }
    let start = world.now() + secs(1);
    let sport = 40000 + (seed % 20000) as u16;
    let outcome = match protocol {
        Protocol::Dns => {
            let resolver = lab
                .resolver
                .ok_or_else(|| EvasionError::InvalidTrial("lab has no DNS resolver".into()))?;
            let id = (seed as u16) | 1;
            let payload = dns_query(domain, id, query)?;
            let client = DnsClient::new(resolver, sport, domain, payload, id, strategy.cloned(), seed);
            world.add_agent(lab.client, Box::new(client));
            world.schedule_timer(lab.client, start, 0);
            world.run_until(start + TRIAL_LENGTH);
            let c: &DnsClient = world.agent(lab.client).expect("agent");
            if let Some(e) = c.errors.first() {
                return Err(EvasionError::Unsupported(e.clone()));
            }
            let forged = matches!(c.accepted, Some((a, sig)) if sig || a == FORGED_ADDR);
            let delivered = matches!(c.accepted, Some((_, false))) && !forged;
            Outcome {
                censored: forged,
                delivered,
                injections: c.injections.len(),
                intact: true,
                trace: Vec::new(),
            }
        }
        Protocol::Http | Protocol::Https => {
            let server = lab
                .web_server
                .ok_or_else(|| EvasionError::InvalidTrial("lab has no web server".into()))?;
            let (request, port) = if protocol == Protocol::Http {
                (http_get(domain).raw, 80)
            } else {
                (build_client_hello(domain), 443)
            };
            let client = TcpClient::new(server, sport, port, request.clone(), strategy.cloned(), seed);
            world.add_agent(lab.client, Box::new(client));
            world.schedule_timer(lab.client, start, 0);
            world.run_until(start + TRIAL_LENGTH);
            let c: &TcpClient = world.agent(lab.client).expect("agent");
            if let Some(e) = c.errors.first() {
                return Err(EvasionError::Unsupported(e.clone()));
            }
            let served = world.host::<HttpServer>(server).and_then(|s| {
                s.requests
                    .iter()
                    .find(|r| r.peer.src_ip == lab.client && r.peer.src_port == sport)
                    .cloned()
            });
            let host_ok = served
                .as_ref()
                .and_then(|r| r.host.as_deref())
                .is_some_and(|h| h.eq_ignore_ascii_case(domain));
            let intact = served.as_ref().is_some_and(|r| r.raw == request);
            let got_reply = !c.received.is_empty();
            Outcome {
                censored: !c.injections.is_empty(),
                delivered: host_ok && got_reply && c.injections.is_empty() && !c.aborted,
                injections: c.injections.len(),
                intact,
                trace: Vec::new(),
            }
        }
    };
    Ok(Outcome {
        trace: world.trace().to_vec(),
        ..outcome
    })
}

fn report(
    text: String,
    lab: &Lab,
    protocol: Protocol,
    domain: &str,
    strategy: Option<&Strategy>,
    query: Query,
) -> Result<EvasionReport, EvasionError> {
    let baseline = run_once(lab, protocol, domain, None, &Query::Standard, lab.seed)?;
    if !baseline.censored {
        return Err(EvasionError::InvalidTrial(format!(
            "{domain} is not censored over {protocol} without a strategy"
        )));
    }
    let trial = run_once(lab, protocol, domain, strategy, &query, lab.seed.wrapping_add(1))?;
    Ok(EvasionReport {
        strategy: text,
        protocol,
        domain: domain.to_string(),
        baseline_censored: true,
        with_strategy_delivered: trial.delivered,
        injections_observed: trial.injections,
        request_intact: trial.intact,
        successful: trial.delivered,
        trace: trial.trace,
    })
}

pub fn evaluate(
    strategy: &Strategy,
    protocol: Protocol,
    domain: &str,
    lab: &Lab,
) -> Result<EvasionReport, EvasionError> {
    report(strategy.text(), lab, protocol, domain, Some(strategy), Query::Standard)
}

/// The second-question query (qdcount left at 1), which the strategy
/// language cannot express.
pub fn evaluate_duplicate_question(domain: &str, lab: &Lab) -> Result<EvasionReport, EvasionError> {
    report(
        "dns-duplicate-question".into(),
        lab,
        Protocol::Dns,
        domain,
        None,
        Query::DuplicateQuestion,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocklist::BlockRule;
    use crate::evasion::{builtin, dns_count, free_pass, sandwich, segmentation_at};
    use crate::time::millis;

    fn lab() -> Lab {
        Lab::with_rules([BlockRule::new("twitter.com", false, false).unwrap()], &["twitter.com"])
    }

    fn ok(name: &str, p: Protocol) -> EvasionReport {
        evaluate(&builtin(name).unwrap(), p, "twitter.com", &lab()).unwrap()
    }

    #[test]
    fn every_builtin_succeeds_on_its_protocols() {
        let http_https = [
            "segmentation-http",
            "tcb-teardown-rst",
            "tcb-teardown-fin",
            "tcb-teardown-nonsense-flags",
            "free-pass-client",
            "free-pass-client-fin",
            "free-pass-server-elicited",
        ];
        for name in http_https {
            for p in [Protocol::Http, Protocol::Https] {
                if name == "segmentation-http" && p == Protocol::Https {
                    continue;
                }
                let r = ok(name, p);
                assert!(r.successful, "{name} {p:?} {r:?}");
                assert!(r.request_intact, "{name} {p:?}");
            }
        }
        for name in ["segmentation-tls-record", "segmentation-tls-sni"] {
            let r = ok(name, Protocol::Https);
            assert!(r.successful && r.request_intact, "{name}");
        }
        for f in ["qdcount", "ancount", "nscount", "arcount"] {
            let r = ok(&format!("dns-elevated-count-{f}"), Protocol::Dns);
            assert!(r.successful, "{f}");
        }
        for name in [
            "http-host-whitespace",
            "http-ws-after-version",
            "http-nl-before-method",
            "sandwich-v1",
            "sandwich-v2",
        ] {
            let r = ok(name, Protocol::Http);
            assert!(r.successful, "{name} {r:?}");
        }
    }

    #[test]
    fn baseline_must_be_censored() {
        let err = evaluate(
            &builtin("segmentation-http").unwrap(),
            Protocol::Http,
            "example.com",
            &lab(),
        )
        .unwrap_err();
        assert!(matches!(err, EvasionError::InvalidTrial(_)));
    }

    #[test]
    fn free_pass_boundary() {
        let l = lab();
        for p in [Protocol::Http, Protocol::Https] {
            assert!(
                evaluate(&free_pass(millis(4999)), p, "twitter.com", &l)
                    .unwrap()
                    .successful
            );
            assert!(!evaluate(&free_pass(secs(5)), p, "twitter.com", &l).unwrap().successful);
            assert!(!evaluate(&free_pass(secs(6)), p, "twitter.com", &l).unwrap().successful);
        }
    }

    #[test]
    fn tls_split_boundary() {
        let l = lab();
        let split = |i| {
            evaluate(&segmentation_at(i), Protocol::Https, "twitter.com", &l)
                .unwrap()
                .successful
        };
        for i in 3..=8 {
            assert!(split(i), "index {i}");
        }
        for i in [1, 2, 9, 20, 40] {
            assert!(!split(i), "index {i}");
        }
    }

    #[test]
    fn http_split_only_in_version() {
        let l = lab();
        let req = http_get("twitter.com").raw;
        let version = req.windows(8).position(|w| w == b"HTTP/1.1").unwrap();
        for i in 1..req.len() {
            let r = evaluate(&segmentation_at(i), Protocol::Http, "twitter.com", &l).unwrap();
            let inside = i > version && i < version + 8;
            assert_eq!(r.successful, inside, "index {i}");
        }
    }

    #[test]
    fn dns_count_threshold() {
        let l = lab();
        for f in ["qdcount", "ancount", "nscount", "arcount"] {
            let run = |v| {
                evaluate(&dns_count(f, v).unwrap(), Protocol::Dns, "twitter.com", &l)
                    .unwrap()
                    .successful
            };
            assert!(!run(25), "{f}");
            assert!(run(26), "{f}");
            assert!(run(32), "{f}");
            assert!(run(65535), "{f}");
        }
    }

    #[test]
    fn sandwich_padding_boundary_is_monotone() {
        let l = lab();
        let run = |v, pad| {
            evaluate(&sandwich(v, pad), Protocol::Http, "twitter.com", &l)
                .unwrap()
                .successful
        };
        for v in [1, 2] {
            let (mut lo, mut hi) = (0usize, 4096usize);
            assert!(!run(v, lo) && run(v, hi));
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if run(v, mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            for pad in [hi, hi + 1, hi + 100, 3391] {
                assert!(run(v, pad), "v{v} pad {pad}");
            }
            for pad in [lo, lo.saturating_sub(1), lo / 2] {
                assert!(!run(v, pad), "v{v} pad {pad}");
            }
        }
    }

    #[test]
    fn duplicate_question_depends_on_legacy_bug() {
        let mut cfg = CensorConfig::with_blocklists(Blocklists::uniform([
            BlockRule::new("twitter.com", false, false).unwrap()
        ]));
        cfg.legacy_dns_count_bug = true;
        let r = evaluate_duplicate_question("twitter.com", &Lab::standard(cfg.clone(), &["twitter.com"])).unwrap();
        assert!(r.successful && r.injections_observed > 0, "{r:?}");
        cfg.legacy_dns_count_bug = false;
        let r = evaluate_duplicate_question("twitter.com", &Lab::standard(cfg, &["twitter.com"])).unwrap();
        assert!(!r.successful && r.injections_observed > 0, "{r:?}");
    }
}

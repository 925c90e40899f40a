//! Discrete-event network: outside parties, a multi-hop path per
//! in-country prefix, and the censor on one link of each path.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::io::Write;
use std::net::Ipv4Addr;

use ipnet::Ipv4Net;
use serde::{Deserialize, Serialize};

use crate::netmodel::packet::DEFAULT_TTL;
use crate::netmodel::{FlowKey, IcmpMessage, PacketEnvelope, Transport};
use crate::time::Micros;

use super::censor::Censor;
use super::config::CensorConfig;
use super::endpoints::{Action, Ctx, Endpoint};

pub const DEFAULT_HOP_LATENCY: Micros = 1_000;

/// Routers between the outside and an in-country prefix, listed from the
/// outside inward. The censor sits on the link after router
/// `censor_after` (0 means before the first router).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSpec {
    pub prefix: Ipv4Net,
    pub hops: Vec<Ipv4Addr>,
    pub censor_after: usize,
}

impl PathSpec {
    /// Four routers in 100.64.0.0/10, censor after the second.
    pub fn synthetic(prefix: Ipv4Net) -> Self {
        PathSpec {
            prefix,
            hops: (1..=4).map(|i| Ipv4Addr::new(100, 64, 0, i)).collect(),
            censor_after: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: Micros,
    pub hop: String,
    pub direction: String,
    pub summary: String,
    pub action: String,
}

/// A packet that reached an outside address with no agent attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Captured {
    pub t: Micros,
    pub env: PacketEnvelope,
}

/// Ground-truth log entry for every forged packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InjectionRecord {
    pub t_injected: Micros,
    pub t_arrival: Micros,
    /// Routers between the censor and the receiver.
    pub return_hops: usize,
    /// The packet as it arrives, with its remaining ttl.
    pub env: PacketEnvelope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    /// Outside toward an in-country address.
    In,
    /// In-country toward the outside.
    Out,
}

impl Dir {
    fn name(self) -> &'static str {
        match self {
            Dir::In => "inbound",
            Dir::Out => "outbound",
        }
    }
}

enum EventKind {
    Censor {
        env: PacketEnvelope,
        path: PathSpec,
        dir: Dir,
        t_sent: Micros,
    },
    Deliver {
        env: PacketEnvelope,
        inside: bool,
        hop: String,
    },
    Timer {
        ip: Ipv4Addr,
        inside: bool,
        token: u64,
    },
}

struct Event {
    t: Micros,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.t, self.seq) == (other.t, other.seq)
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.t, self.seq).cmp(&(other.t, other.seq))
    }
}

pub struct World {
    now: Micros,
    seq: u64,
    queue: BinaryHeap<Reverse<Event>>,
    pub censor: Censor,
    pub hop_latency: Micros,
    paths: Vec<PathSpec>,
    hosts: BTreeMap<Ipv4Addr, Box<dyn Endpoint>>,
    agents: BTreeMap<Ipv4Addr, Box<dyn Endpoint>>,
    captured: BTreeMap<FlowKey, Vec<Captured>>,
    injections: Vec<InjectionRecord>,
    trace: Option<Vec<TraceRecord>>,
    next_ip_id: u16,
}

impl World {
    pub fn new(config: CensorConfig) -> Self {
        World {
            now: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            censor: Censor::new(config),
            hop_latency: DEFAULT_HOP_LATENCY,
            paths: Vec::new(),
            hosts: BTreeMap::new(),
            agents: BTreeMap::new(),
            captured: BTreeMap::new(),
            injections: Vec::new(),
            trace: None,
            next_ip_id: 1,
        }
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> &[TraceRecord] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn write_trace<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in self.trace() {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn add_path(&mut self, path: PathSpec) {
        self.paths.push(path);
    }

    pub fn paths(&self) -> &[PathSpec] {
        &self.paths
    }

    /// Installs an in-country endpoint.
    pub fn add_host(&mut self, ip: Ipv4Addr, endpoint: Box<dyn Endpoint>) {
        self.hosts.insert(ip, endpoint);
    }

    /// Installs an outside endpoint; its packets travel inward.
    pub fn add_agent(&mut self, ip: Ipv4Addr, endpoint: Box<dyn Endpoint>) {
        self.agents.insert(ip, endpoint);
    }

    pub fn host<T: 'static>(&self, ip: Ipv4Addr) -> Option<&T> {
        self.hosts.get(&ip)?.as_any().downcast_ref()
    }

    pub fn agent<T: 'static>(&self, ip: Ipv4Addr) -> Option<&T> {
        self.agents.get(&ip)?.as_any().downcast_ref()
    }

    pub fn agent_mut<T: 'static>(&mut self, ip: Ipv4Addr) -> Option<&mut T> {
        self.agents.get_mut(&ip)?.as_any_mut().downcast_mut()
    }

    pub fn now(&self) -> Micros {
        self.now
    }

    pub fn injections(&self) -> &[InjectionRecord] {
        &self.injections
    }

    /// Longest-prefix path toward an in-country address. Hosts outside
    /// every configured prefix get a synthetic path.
    pub fn path_for(&self, ip: Ipv4Addr) -> Option<PathSpec> {
        let best = self
            .paths
            .iter()
            .filter(|p| p.prefix.contains(&ip))
            .max_by_key(|p| p.prefix.prefix_len());
        match best {
            Some(p) => Some(p.clone()),
            None if self.hosts.contains_key(&ip) => Some(PathSpec::synthetic(Ipv4Net::new(ip, 32).expect("valid /32"))),
            None => None,
        }
    }

    pub fn is_inside(&self, ip: Ipv4Addr) -> bool {
        self.hosts.contains_key(&ip) || self.paths.iter().any(|p| p.prefix.contains(&ip))
    }

    /// Packets captured for an outbound flow (as seen from the outside
    /// sender), including Time-Exceeded quoting it.
    pub fn captured(&self, flow: &FlowKey) -> &[Captured] {
        self.captured.get(flow).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn take_captured(&mut self, flow: &FlowKey) -> Vec<Captured> {
        self.captured.remove(flow).unwrap_or_default()
    }

    fn push(&mut self, t: Micros, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Reverse(Event { t, seq: self.seq, kind }));
    }

    fn record(&mut self, t: Micros, hop: &str, dir: &str, env: &PacketEnvelope, action: &str) {
        if let Some(tr) = self.trace.as_mut() {
            tr.push(TraceRecord {
                t,
                hop: hop.to_string(),
                direction: dir.to_string(),
                summary: env.summary(),
                action: action.to_string(),
            });
        }
    }

    fn alloc_ip_id(&mut self) -> u16 {
        let injection_id = self.censor.config.injection_ip_id;
        loop {
            let id = self.next_ip_id;
            self.next_ip_id = self.next_ip_id.wrapping_add(1);
            if id != injection_id {
                return id;
            }
        }
    }

    /// Sends a packet now. The sender is inside when its source address
    /// is an in-country address, outside otherwise.
    pub fn send(&mut self, env: PacketEnvelope) {
        self.send_at(env, self.now);
    }

    pub fn send_at(&mut self, mut env: PacketEnvelope, t: Micros) {
        let t = t.max(self.now);
        if env.ip.identification == self.censor.config.injection_ip_id {
            env.ip.identification = env.ip.identification.wrapping_add(1);
            env.finalize_ip();
        }
        let l = self.hop_latency;
        if self.is_inside(env.ip.src) && !self.is_inside(env.ip.dst) {
            let path = self.path_for(env.ip.src).expect("inside source has a path");
            self.record(t, "host", Dir::Out.name(), &env, "send");
            let at = t + (path.hops.len() - path.censor_after) as Micros * l + l / 2;
            self.push(
                at,
                EventKind::Censor {
                    env,
                    path,
                    dir: Dir::Out,
                    t_sent: t,
                },
            );
            return;
        }
        let Some(path) = self.path_for(env.ip.dst) else {
            self.record(t, "client", Dir::In.name(), &env, "drop:no-route");
            return;
        };
        self.record(t, "client", Dir::In.name(), &env, "send");
        let ttl = usize::from(env.ip.ttl);
        if ttl == 0 {
            return;
        }
        if ttl <= path.censor_after {
            self.time_exceeded(env, &path, t);
            return;
        }
        let at = t + path.censor_after as Micros * l + l / 2;
        self.push(
            at,
            EventKind::Censor {
                env,
                path,
                dir: Dir::In,
                t_sent: t,
            },
        );
    }

    /// Schedules the Time-Exceeded from the router where `env` expires.
    fn time_exceeded(&mut self, env: PacketEnvelope, path: &PathSpec, t_sent: Micros) {
        let ttl = usize::from(env.ip.ttl);
        let router = path.hops[ttl - 1];
        let mut te = PacketEnvelope::icmp(router, env.ip.src, IcmpMessage::time_exceeded(&env));
        te.ip.ttl = DEFAULT_TTL - (ttl as u8 - 1);
        te.ip.identification = self.alloc_ip_id();
        te.finalize_ip();
        let at = t_sent + 2 * ttl as Micros * self.hop_latency;
        self.record(
            t_sent + ttl as Micros * self.hop_latency,
            &format!("r{ttl}"),
            Dir::In.name(),
            &env,
            "time-exceeded",
        );
        self.push(
            at,
            EventKind::Deliver {
                env: te,
                inside: false,
                hop: format!("r{ttl}"),
            },
        );
    }

    fn on_censor(&mut self, mut env: PacketEnvelope, path: PathSpec, dir: Dir, t_sent: Micros) {
        let l = self.hop_latency;
        let n = path.hops.len();
        let c = path.censor_after;
        let inside = match dir {
            Dir::In => env.ip.dst,
            Dir::Out => env.ip.src,
        };
        let forged = self.censor.on_packet(&env, self.now, inside);
        self.record(
            self.now,
            "censor",
            dir.name(),
            &env,
            if forged.is_empty() { "pass" } else { "inject" },
        );
        for mut inj in forged {
            let to_inside = self.is_inside(inj.ip.dst);
            let return_hops = if to_inside { n - c } else { c };
            inj.ip.ttl = inj.ip.ttl.saturating_sub(return_hops as u8);
            inj.finalize_ip();
            let at = self.now + return_hops as Micros * l + l / 2;
            self.record(
                self.now,
                "censor",
                if to_inside { "inbound" } else { "outbound" },
                &inj,
                "forge",
            );
            self.injections.push(InjectionRecord {
                t_injected: self.now,
                t_arrival: at,
                return_hops,
                env: inj.clone(),
            });
            self.push(
                at,
                EventKind::Deliver {
                    env: inj,
                    inside: to_inside,
                    hop: "censor".into(),
                },
            );
        }
        match dir {
            Dir::In => {
                let ttl = usize::from(env.ip.ttl);
                if ttl <= n {
                    self.time_exceeded(env, &path, t_sent);
                } else {
                    env.ip.ttl -= n as u8;
                    env.finalize_ip();
                    let at = t_sent + (n as Micros + 1) * l;
                    self.push(
                        at,
                        EventKind::Deliver {
                            env,
                            inside: true,
                            hop: "host".into(),
                        },
                    );
                }
            }
            Dir::Out => {
                env.ip.ttl = env.ip.ttl.saturating_sub(n as u8);
                env.finalize_ip();
                let at = t_sent + (n as Micros + 1) * l;
                self.push(
                    at,
                    EventKind::Deliver {
                        env,
                        inside: false,
                        hop: "client".into(),
                    },
                );
            }
        }
    }

    fn on_deliver(&mut self, env: PacketEnvelope, inside: bool, hop: &str) {
        let dst = env.ip.dst;
        let (dir, table) = if inside {
            (Dir::In, &mut self.hosts)
        } else {
            (Dir::Out, &mut self.agents)
        };
        let Some(mut ep) = table.remove(&dst) else {
            if inside {
                self.record(self.now, hop, dir.name(), &env, "drop:no-host");
            } else {
                self.record(self.now, hop, dir.name(), &env, "capture");
                let key = match &env.transport {
                    Transport::Icmp(m) => m.quoted_flow(),
                    _ => env.flow().map(FlowKey::reversed),
                };
                if let Some(k) = key {
                    self.captured.entry(k).or_default().push(Captured { t: self.now, env });
                }
            }
            return;
        };
        self.record(self.now, hop, dir.name(), &env, "deliver");
        let mut ctx = Ctx::new(self.now, dst);
        ep.on_packet(&mut ctx, &env);
        if inside {
            self.hosts.insert(dst, ep);
        } else {
            self.agents.insert(dst, ep);
        }
        self.apply(ctx, inside);
    }

    fn on_timer(&mut self, ip: Ipv4Addr, inside: bool, token: u64) {
        let table = if inside { &mut self.hosts } else { &mut self.agents };
        let Some(mut ep) = table.remove(&ip) else { return };
        let mut ctx = Ctx::new(self.now, ip);
        ep.on_timer(&mut ctx, token);
        if inside {
            self.hosts.insert(ip, ep);
        } else {
            self.agents.insert(ip, ep);
        }
        self.apply(ctx, inside);
    }

    fn apply(&mut self, ctx: Ctx, inside: bool) {
        let ip = ctx.ip();
        for a in ctx.actions {
            match a {
                Action::Send { mut env, delay } => {
                    env.ip.identification = self.alloc_ip_id();
                    env.finalize_ip();
                    self.send_at(env, self.now + delay);
                }
                Action::Timer { delay, token } => {
                    self.push(self.now + delay, EventKind::Timer { ip, inside, token });
                }
            }
        }
    }

    /// Wakes an endpoint at `t` with `token`.
    pub fn schedule_timer(&mut self, ip: Ipv4Addr, t: Micros, token: u64) {
        let inside = self.hosts.contains_key(&ip);
        self.push(t.max(self.now), EventKind::Timer { ip, inside, token });
    }

    /// Processes every event up to and including `t`, then sets the clock
    /// to `t`.
    pub fn run_until(&mut self, t: Micros) {
        while let Some(Reverse(ev)) = self.queue.peek() {
            if ev.t > t {
                break;
            }
            let Reverse(ev) = self.queue.pop().expect("peeked");
            self.now = ev.t;
            match ev.kind {
                EventKind::Censor { env, path, dir, t_sent } => self.on_censor(env, path, dir, t_sent),
                EventKind::Deliver { env, inside, hop } => self.on_deliver(env, inside, &hop),
                EventKind::Timer { ip, inside, token } => self.on_timer(ip, inside, token),
            }
        }
        self.now = self.now.max(t);
    }

    pub fn run_for(&mut self, d: Micros) {
        self.run_until(self.now + d);
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }
}

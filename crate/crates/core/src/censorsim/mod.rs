//! The simulated censor and the network it sits in.

mod censor;
mod config;
pub mod endpoints;
pub mod lenient;
mod scenario;
mod world;

pub use censor::{censor_on_packet, Censor, CensorState, Tcb, FORGED_ADDR};
pub use config::{BanPolicy, CensorConfig, FilteredIps};
pub use endpoints::{Ctx, DnsResolver, EchoTcp, Endpoint, HttpServer, ServedRequest, Unresponsive};
pub use scenario::{
    parse_rules_text, prefix_addresses, FilterSpec, HostKind, HostSpec, Scenario, ScenarioError, ScriptPacket,
    ScriptStep,
};
pub use world::{Captured, InjectionRecord, PathSpec, TraceRecord, World, DEFAULT_HOP_LATENCY};

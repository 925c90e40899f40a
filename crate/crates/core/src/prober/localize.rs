use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::blocklist::Protocol;
use crate::censorsim::World;
use crate::netmodel::Transport;

use super::probe::{ProbeJob, Prober};
use super::{Evidence, ProbeError, Verdict};

pub const INJECTION_TTL: u8 = 128;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Localization {
    pub target: Ipv4Addr,
    /// Smallest probe TTL that drew an injection; `None` means not filtered.
    pub censor_hop: Option<u8>,
    /// Time-Exceeded senders, index `T - 1` for probe TTL `T`.
    pub path: Vec<Option<Ipv4Addr>>,
    pub evidence: Option<Evidence>,
    /// Observed injection TTL equals 128 minus the hops before the censor.
    pub consistent: bool,
}

/// Limited-TTL localization with two-packet HTTP probes on fresh flows.
pub fn localize(
    world: &mut World,
    prober: &mut Prober,
    target: Ipv4Addr,
    domain: &str,
    max_ttl: u8,
) -> Result<Localization, ProbeError> {
    let mut out = Localization {
        target,
        censor_hop: None,
        path: Vec::new(),
        evidence: None,
        consistent: false,
    };
    for ttl in 1..=max_ttl {
        let job = ProbeJob {
            ttl,
            ..ProbeJob::new(Protocol::Http, domain, target)
        };
        let flight = prober.launch(world, job, world.now())?;
        world.run_until(flight.deadline);
        let te = world.captured(&flight.flow).iter().find_map(|c| match c.env.transport {
            Transport::Icmp(ref m) if m.icmp_type == 11 => Some(c.env.ip.src),
            _ => None,
        });
        let rec = prober.collect(world, flight);
        if out.censor_hop.is_none() && rec.verdict == Verdict::Censored {
            out.censor_hop = Some(ttl);
            out.evidence = rec.evidence;
        }
        match te {
            Some(router) => out.path.push(Some(router)),
            None => break,
        }
    }
    if let (Some(hop), Some(ev)) = (out.censor_hop, &out.evidence) {
        out.consistent = u16::from(ev.observed_ttl) + u16::from(hop) - 1 == u16::from(INJECTION_TTL);
    }
    Ok(out)
}

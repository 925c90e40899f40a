use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use ipnet::Ipv4Net;
use serde::{Deserialize, Serialize};

use crate::blocklist::Protocol;
use crate::censorsim::{prefix_addresses, World};
use crate::time::secs;

use super::campaign::Controls;
use super::probe::{ProbeJob, Prober};
use super::{ProbeError, ProbeRecord, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IpStatus {
    Filtered,
    NotFiltered,
    ResponsiveExcluded,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IpClassification {
    pub ip: Ipv4Addr,
    pub status: BTreeMap<Protocol, IpStatus>,
    pub trials: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixFraction {
    pub prefix: Ipv4Net,
    pub protocol: Protocol,
    pub filtered: usize,
    /// Addresses not excluded as responsive.
    pub considered: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanPlan {
    pub controls: Controls,
    pub protocols: Vec<Protocol>,
    pub sources: Vec<Ipv4Addr>,
    pub seed: u64,
    pub retries: u32,
    pub sleep_s: u64,
    pub pacing_per_sec: u32,
}

impl Default for ScanPlan {
    fn default() -> Self {
        ScanPlan {
            controls: Controls::default(),
            protocols: Protocol::ALL.to_vec(),
            sources: vec![Ipv4Addr::new(198, 51, 100, 10)],
            seed: 0,
            retries: 3,
            sleep_s: 9,
            pacing_per_sec: 1000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub ips: Vec<IpClassification>,
    pub fractions: Vec<PrefixFraction>,
}

impl ScanResult {
    /// Addresses filtered for `protocol`, in scan order.
    pub fn filtered(&self, protocol: Protocol) -> Vec<Ipv4Addr> {
        self.ips
            .iter()
            .filter(|c| c.status.get(&protocol) == Some(&IpStatus::Filtered))
            .map(|c| c.ip)
            .collect()
    }
}

const SCAN_BATCH: usize = 2048;

/// Probes every address of every prefix with the known-blocked,
/// innocuous and opt-out domains on each protocol.
pub fn scan_prefixes(world: &mut World, prefixes: &[Ipv4Net], plan: &ScanPlan) -> Result<ScanResult, ProbeError> {
    if plan.sources.is_empty() {
        return Err(ProbeError::NoSources);
    }
    let mut prober = Prober::new(plan.sources.clone(), plan.seed);
    prober.pacing_per_sec = plan.pacing_per_sec.max(1);
    let domains = [
        &plan.controls.known_blocked,
        &plan.controls.innocuous,
        &plan.controls.optout,
    ];

    let mut result = ScanResult::default();
    for prefix in prefixes {
        let ips = prefix_addresses(prefix);
        let mut recs: BTreeMap<(Ipv4Addr, Protocol), [Option<ProbeRecord>; 3]> = BTreeMap::new();
        let mut jobs = Vec::new();
        for &ip in &ips {
            for &protocol in &plan.protocols {
                for (k, d) in domains.iter().enumerate() {
                    jobs.push((
                        (ip, protocol, k),
                        ProbeJob {
                            sleep: secs(plan.sleep_s),
                            ..ProbeJob::new(protocol, d, ip)
                        },
                    ));
                }
            }
        }
        run_keyed(world, &mut prober, jobs, &mut recs)?;

        let mut trials: BTreeMap<Ipv4Addr, u32> = BTreeMap::new();
        for _ in 0..plan.retries {
            let retry: Vec<_> = recs
                .iter()
                .flat_map(|(&(ip, p), slots)| {
                    slots.iter().enumerate().filter_map(move |(k, r)| {
                        let r = r.as_ref()?;
                        (r.verdict == Verdict::Inconclusive).then(|| {
                            (
                                (ip, p, k),
                                ProbeJob {
                                    sleep: secs(plan.sleep_s),
                                    ..ProbeJob::new(p, &r.domain, ip)
                                },
                            )
                        })
                    })
                })
                .collect();
            if retry.is_empty() {
                break;
            }
            for ((ip, _, _), _) in &retry {
                *trials.entry(*ip).or_default() += 1;
            }
            run_keyed(world, &mut prober, retry, &mut recs)?;
        }

        let mut counts: BTreeMap<Protocol, (usize, usize)> = BTreeMap::new();
        for &ip in &ips {
            let mut status = BTreeMap::new();
            for &p in &plan.protocols {
                let slots = &recs[&(ip, p)];
                let s = classify(slots);
                let e = counts.entry(p).or_default();
                if s != IpStatus::ResponsiveExcluded {
                    e.1 += 1;
                }
                if s == IpStatus::Filtered {
                    e.0 += 1;
                }
                status.insert(p, s);
            }
            result.ips.push(IpClassification {
                ip,
                status,
                trials: 1 + trials.get(&ip).copied().unwrap_or(0),
            });
        }
        for (protocol, (filtered, considered)) in counts {
            let percent = if considered == 0 {
                0.0
            } else {
                100.0 * filtered as f64 / considered as f64
            };
            result.fractions.push(PrefixFraction {
                prefix: *prefix,
                protocol,
                filtered,
                considered,
                percent,
            });
        }
    }
    Ok(result)
}

fn classify(slots: &[Option<ProbeRecord>; 3]) -> IpStatus {
    let recs: Vec<&ProbeRecord> = slots.iter().flatten().collect();
    if recs.iter().any(|r| r.responsive) {
        return IpStatus::ResponsiveExcluded;
    }
    match slots[0].as_ref().map(|r| r.verdict) {
        Some(Verdict::Censored) => IpStatus::Filtered,
        Some(Verdict::Inconclusive) => IpStatus::Inconclusive,
        _ => IpStatus::NotFiltered,
    }
}

type Slots = BTreeMap<(Ipv4Addr, Protocol), [Option<ProbeRecord>; 3]>;

fn run_keyed(
    world: &mut World,
    prober: &mut Prober,
    jobs: Vec<((Ipv4Addr, Protocol, usize), ProbeJob)>,
    out: &mut Slots,
) -> Result<(), ProbeError> {
    let mut it = jobs.into_iter().peekable();
    while it.peek().is_some() {
        let (keys, batch): (Vec<_>, Vec<_>) = it.by_ref().take(SCAN_BATCH).unzip();
        for ((ip, p, k), rec) in keys.into_iter().zip(prober.run_jobs(world, batch)?) {
            out.entry((ip, p)).or_default()[k] = Some(rec);
        }
    }
    Ok(())
}

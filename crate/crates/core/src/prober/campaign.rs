use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::blocklist::Protocol;
use crate::censorsim::World;
use crate::time::{secs, Micros};

use super::alloc::FlowAllocator;
use super::probe::{ProbeJob, Prober};
use super::{ProbeError, ProbeRecord, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Controls {
    pub known_blocked: String,
    pub innocuous: String,
    pub optout: String,
}

impl Default for Controls {
    fn default() -> Self {
        Controls {
            known_blocked: "twitter.com".into(),
            innocuous: "example.com".into(),
            optout: "optout.example.net".into(),
        }
    }
}

fn default_protocols() -> Vec<Protocol> {
    Protocol::ALL.to_vec()
}
fn default_pacing() -> u32 {
    100
}
fn default_sleep() -> u64 {
    9
}
fn default_quarantine() -> u64 {
    35
}
fn default_control_every() -> usize {
    100
}
fn default_retries() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignPlan {
    pub domains: Vec<String>,
    #[serde(default = "default_protocols")]
    pub protocols: Vec<Protocol>,
    #[serde(default)]
    pub targets: Vec<Ipv4Addr>,
    #[serde(default)]
    pub controls: Controls,
    #[serde(default = "default_pacing")]
    pub pacing_per_sec: u32,
    pub sources: Vec<Ipv4Addr>,
    #[serde(default = "default_sleep")]
    pub sleep_s: u64,
    #[serde(default = "default_quarantine")]
    pub quarantine_s: u64,
    /// One control probe per this many probes; 0 disables controls.
    #[serde(default = "default_control_every")]
    pub control_every: usize,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default)]
    pub seed: u64,
}

impl CampaignPlan {
    pub fn new(domains: Vec<String>, targets: Vec<Ipv4Addr>, sources: Vec<Ipv4Addr>) -> Self {
        CampaignPlan {
            domains,
            protocols: default_protocols(),
            targets,
            controls: Controls::default(),
            pacing_per_sec: default_pacing(),
            sources,
            sleep_s: default_sleep(),
            quarantine_s: default_quarantine(),
            control_every: default_control_every(),
            retries: default_retries(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ProbeError> {
        if self.targets.is_empty() {
            return Err(ProbeError::NoTargets(
                "plan has no confirmed filtered targets; run a scan first".into(),
            ));
        }
        if self.sources.is_empty() {
            return Err(ProbeError::NoSources);
        }
        if !(5..=29).contains(&self.sleep_s) {
            return Err(ProbeError::Invalid(format!("sleep_s {} outside [5, 29]", self.sleep_s)));
        }
        if self.quarantine_s < 35 {
            return Err(ProbeError::Invalid(format!(
                "quarantine_s {} below 35",
                self.quarantine_s
            )));
        }
        if self.pacing_per_sec == 0 {
            return Err(ProbeError::Invalid("pacing_per_sec must be positive".into()));
        }
        Ok(())
    }

    pub fn sleep(&self) -> Micros {
        secs(self.sleep_s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolCounts {
    pub probed: usize,
    pub censored: usize,
    pub not_censored: usize,
    pub inconclusive: usize,
    pub source_ban_suspected: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub per_protocol: BTreeMap<Protocol, ProtocolCounts>,
    pub controls_sent: usize,
    pub disabled_sources: Vec<Ipv4Addr>,
    /// Every source was lost before all probes completed.
    pub halted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub records: Vec<ProbeRecord>,
    pub controls: Vec<ProbeRecord>,
    pub summary: CampaignSummary,
}

impl CampaignResult {
    pub fn censored(&self, protocol: Protocol) -> BTreeSet<String> {
        self.records
            .iter()
            .filter(|r| r.protocol == protocol && r.verdict == Verdict::Censored)
            .map(|r| r.domain.clone())
            .collect()
    }
}

/// Probes every domain once per selected protocol. Batches run from one
/// source until a batch's trailing known-blocked control fails; then the
/// source is retired and the batch replayed from the next one.
pub fn run_campaign(world: &mut World, plan: &CampaignPlan) -> Result<CampaignResult, ProbeError> {
    plan.validate()?;
    let alloc = FlowAllocator::new(plan.sources.clone(), plan.seed, secs(plan.quarantine_s));
    let mut prober = Prober::with_allocator(alloc, plan.seed);
    prober.pacing_per_sec = plan.pacing_per_sec;

    let mut jobs = Vec::new();
    for &protocol in &plan.protocols {
        for domain in &plan.domains {
            let target = plan.targets[jobs.len() % plan.targets.len()];
            jobs.push(ProbeJob {
                sleep: plan.sleep(),
                ..ProbeJob::new(protocol, domain, target)
            });
        }
    }

    let batch_size = if plan.control_every == 0 {
        100
    } else {
        plan.control_every
    };
    let mut result = CampaignResult::default();
    let mut batches = jobs.chunks(batch_size);
    let mut batch = batches.next();
    while let Some(chunk) = batch {
        let active = prober.alloc.active_sources();
        if active.is_empty() {
            result.summary.halted = true;
            break;
        }
        let src = active[0];
        let mut run: Vec<ProbeJob> = chunk
            .iter()
            .cloned()
            .map(|j| ProbeJob { src: Some(src), ..j })
            .collect();
        if plan.control_every > 0 {
            let last = chunk.last().expect("chunks are nonempty");
            run.push(ProbeJob {
                src: Some(src),
                sleep: plan.sleep(),
                ..ProbeJob::new(last.protocol, &plan.controls.known_blocked, last.target_ip)
            });
        }
        let mut records = prober.run_jobs(world, run)?;
        let control = (plan.control_every > 0).then(|| records.pop()).flatten();
        if let Some(mut c) = control {
            c.control = true;
            result.summary.controls_sent += 1;
            let failed = c.verdict != Verdict::Censored;
            result.controls.push(c);
            if failed {
                log::warn!("control failed from {src}; retiring source");
                prober.alloc.disable_source(src);
                result.summary.disabled_sources.push(src);
                if prober.alloc.active_sources().is_empty() {
                    for r in records.iter_mut().filter(|r| r.verdict != Verdict::Censored) {
                        r.verdict = Verdict::SourceBanSuspected;
                    }
                    result.records.extend(records);
                    result.summary.halted = true;
                    break;
                }
                continue;
            }
        }
        retry_inconclusive(world, &mut prober, &mut records, src, plan.retries)?;
        result.records.extend(records);
        batch = batches.next();
    }

    for r in &result.records {
        let c = result.summary.per_protocol.entry(r.protocol).or_default();
        c.probed += 1;
        match r.verdict {
            Verdict::Censored => c.censored += 1,
            Verdict::NotCensored => c.not_censored += 1,
            Verdict::Inconclusive => c.inconclusive += 1,
            Verdict::SourceBanSuspected => c.source_ban_suspected += 1,
        }
    }
    Ok(result)
}

fn retry_inconclusive(
    world: &mut World,
    prober: &mut Prober,
    records: &mut [ProbeRecord],
    src: Ipv4Addr,
    retries: u32,
) -> Result<(), ProbeError> {
    for _ in 0..retries {
        let idx: Vec<usize> = (0..records.len())
            .filter(|&i| records[i].verdict == Verdict::Inconclusive)
            .collect();
        if idx.is_empty() {
            break;
        }
        let jobs = idx
            .iter()
            .map(|&i| {
                let r = &records[i];
                ProbeJob {
                    target_port: r.target_port,
                    src: Some(src),
                    sleep: r.t_second.map_or(secs(9), |t| t - r.t_sent),
                    ..ProbeJob::new(r.protocol, &r.domain, r.target_ip)
                }
            })
            .collect();
        for (i, rec) in idx.into_iter().zip(prober.run_jobs(world, jobs)?) {
            records[i] = rec;
        }
    }
    Ok(())
}

/// Probes `blocked` on a fresh flow, then reuses that exact 4-tuple 10 s
/// later for `innocuous`. Returns both records; the second is censored
/// only because of residual state.
pub fn demonstrate_flow_reuse(
    world: &mut World,
    prober: &mut Prober,
    protocol: Protocol,
    blocked: &str,
    innocuous: &str,
    target: Ipv4Addr,
) -> Result<(ProbeRecord, ProbeRecord), ProbeError> {
    let first = prober.run_job(world, ProbeJob::new(protocol, blocked, target))?;
    let flow = crate::netmodel::FlowKey {
        src_ip: first.src_ip,
        src_port: first.src_port,
        dst_ip: first.target_ip,
        dst_port: first.target_port,
    };
    let reuse_at = first.t_second.unwrap_or(first.t_sent) + secs(10);
    world.run_until(reuse_at);
    let second = prober.run_job(
        world,
        ProbeJob {
            forced_flow: Some(flow),
            ..ProbeJob::new(protocol, innocuous, target)
        },
    )?;
    Ok((first, second))
}

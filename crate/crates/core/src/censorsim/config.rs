use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::blocklist::Blocklists;
use crate::time::{secs, Micros};

/// In-country addresses the censor filters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilteredIps {
    #[default]
    All,
    Only(BTreeSet<Ipv4Addr>),
}

impl FilteredIps {
    pub fn contains(&self, ip: Ipv4Addr) -> bool {
        match self {
            FilteredIps::All => true,
            FilteredIps::Only(set) => set.contains(&ip),
        }
    }
}

/// Volume-based source banning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BanPolicy {
    pub enabled: bool,
    pub max_injections_per_source: u32,
    pub window: Micros,
    /// `None` bans for the rest of the run.
    pub ban_duration: Option<Micros>,
}

impl Default for BanPolicy {
    fn default() -> Self {
        BanPolicy {
            enabled: true,
            max_injections_per_source: 10_000,
            window: secs(86_400),
            ban_duration: None,
        }
    }
}

/// Durations are virtual microseconds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CensorConfig {
    pub filtered_ips: FilteredIps,
    pub blocklists: Blocklists,
    pub residual_window: Micros,
    pub trigger_min: Micros,
    pub trigger_max: Micros,
    pub freepass_window: Micros,
    pub injection_ip_id: u16,
    pub injection_ttl: u8,
    pub dns_count_threshold: u16,
    pub inspect_byte_limit: usize,
    pub ban_policy: BanPolicy,
    pub legacy_dns_count_bug: bool,
    pub rng_seed: u64,
}

impl Default for CensorConfig {
    fn default() -> Self {
        CensorConfig {
            filtered_ips: FilteredIps::All,
            blocklists: Blocklists::default(),
            residual_window: secs(30),
            trigger_min: secs(5),
            trigger_max: secs(29),
            freepass_window: secs(5),
            injection_ip_id: 30000,
            injection_ttl: 128,
            dns_count_threshold: 25,
            inspect_byte_limit: 4096,
            ban_policy: BanPolicy::default(),
            legacy_dns_count_bug: false,
            rng_seed: 0,
        }
    }
}

impl CensorConfig {
    pub fn with_blocklists(blocklists: Blocklists) -> Self {
        CensorConfig {
            blocklists,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("residual_window", self.residual_window),
            ("trigger_min", self.trigger_min),
            ("trigger_max", self.trigger_max),
            ("freepass_window", self.freepass_window),
        ] {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.trigger_min >= self.trigger_max {
            return Err("trigger_min must be below trigger_max".into());
        }
        if self.inspect_byte_limit == 0 {
            return Err("inspect_byte_limit must be positive".into());
        }
        Ok(())
    }
}

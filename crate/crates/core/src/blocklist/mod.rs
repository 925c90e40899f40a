//! Blocking rules, per-protocol blocklists and corpus impact.

mod corpus;
mod rule;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use corpus::{
    classify_overblocking, match_corpus, registered_domain, valid_fqdn, CorpusMatch, CorpusMatcher, Overblocking,
    RuleHits,
};
pub use rule::{BlockRule, RuleError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Dns,
    Http,
    Https,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Dns, Protocol::Http, Protocol::Https];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Dns => "dns",
            Protocol::Http => "http",
            Protocol::Https => "https",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dns" => Ok(Protocol::Dns),
            "http" => Ok(Protocol::Http),
            "https" | "tls" => Ok(Protocol::Https),
            _ => Err(format!("unknown protocol {s:?} (expected dns, http or https)")),
        }
    }
}

/// Independent rule sets per protocol.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blocklists {
    #[serde(default)]
    pub dns: BTreeSet<BlockRule>,
    #[serde(default)]
    pub http: BTreeSet<BlockRule>,
    #[serde(default)]
    pub https: BTreeSet<BlockRule>,
}

impl Blocklists {
    pub fn get(&self, p: Protocol) -> &BTreeSet<BlockRule> {
        match p {
            Protocol::Dns => &self.dns,
            Protocol::Http => &self.http,
            Protocol::Https => &self.https,
        }
    }

    pub fn get_mut(&mut self, p: Protocol) -> &mut BTreeSet<BlockRule> {
        match p {
            Protocol::Dns => &mut self.dns,
            Protocol::Http => &mut self.http,
            Protocol::Https => &mut self.https,
        }
    }

    /// The same rules on all three protocols.
    pub fn uniform(rules: impl IntoIterator<Item = BlockRule>) -> Self {
        let set: BTreeSet<BlockRule> = rules.into_iter().collect();
        Blocklists {
            dns: set.clone(),
            http: set.clone(),
            https: set,
        }
    }

    pub fn matches(&self, p: Protocol, name: &str) -> bool {
        self.get(p).iter().any(|r| r.matches(name))
    }

    pub fn is_empty(&self) -> bool {
        self.dns.is_empty() && self.http.is_empty() && self.https.is_empty()
    }
}

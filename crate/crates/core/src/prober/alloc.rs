use std::collections::{BTreeSet, HashMap};
use std::net::Ipv4Addr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::netmodel::FlowKey;
use crate::time::{secs, Micros};

use super::ProbeError;

pub const DEFAULT_QUARANTINE: Micros = secs(35);
const PORT_LO: u16 = 1024;

/// Hands out 4-tuples so that none is reused within the quarantine
/// window. Sources are taken round-robin; each source walks its port
/// range from a seeded offset.
#[derive(Debug, Clone)]
pub struct FlowAllocator {
    sources: Vec<Ipv4Addr>,
    disabled: BTreeSet<Ipv4Addr>,
    quarantine: Micros,
    next_port: Vec<u16>,
    cursor: usize,
    last_used: HashMap<FlowKey, Micros>,
    newest: Micros,
}

impl FlowAllocator {
    pub fn new(sources: Vec<Ipv4Addr>, seed: u64, quarantine: Micros) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let next_port = sources.iter().map(|_| rng.gen_range(PORT_LO..=u16::MAX)).collect();
        FlowAllocator {
            sources,
            disabled: BTreeSet::new(),
            quarantine,
            next_port,
            cursor: 0,
            last_used: HashMap::new(),
            newest: 0,
        }
    }

    pub fn sources(&self) -> &[Ipv4Addr] {
        &self.sources
    }

    pub fn active_sources(&self) -> Vec<Ipv4Addr> {
        self.sources
            .iter()
            .copied()
            .filter(|s| !self.disabled.contains(s))
            .collect()
    }

    pub fn disable_source(&mut self, src: Ipv4Addr) {
        self.disabled.insert(src);
    }

    pub fn quarantine(&self) -> Micros {
        self.quarantine
    }

    fn free(&self, key: &FlowKey, now: Micros) -> bool {
        match self.last_used.get(key) {
            Some(&t) => now.abs_diff(t) >= self.quarantine,
            None => true,
        }
    }

    fn prune(&mut self) {
        if self.last_used.len() > 1 << 16 {
            let (newest, q) = (self.newest, self.quarantine);
            self.last_used.retain(|_, t| newest.saturating_sub(*t) < q);
        }
    }

    fn try_source(&mut self, idx: usize, dst_ip: Ipv4Addr, dst_port: u16, now: Micros) -> Option<FlowKey> {
        let span = u32::from(u16::MAX - PORT_LO) + 1;
        for _ in 0..span {
            let port = self.next_port[idx];
            self.next_port[idx] = if port == u16::MAX { PORT_LO } else { port + 1 };
            let key = FlowKey {
                src_ip: self.sources[idx],
                src_port: port,
                dst_ip,
                dst_port,
            };
            if self.free(&key, now) {
                self.last_used.insert(key, now);
                self.newest = self.newest.max(now);
                self.prune();
                return Some(key);
            }
        }
        None
    }

    /// A fresh flow toward the target, from `src` if given, otherwise
    /// from the next active source in turn.
    pub fn allocate(
        &mut self,
        dst_ip: Ipv4Addr,
        dst_port: u16,
        now: Micros,
        src: Option<Ipv4Addr>,
    ) -> Result<FlowKey, ProbeError> {
        if let Some(s) = src {
            let idx = self
                .sources
                .iter()
                .position(|&x| x == s)
                .ok_or(ProbeError::UnknownSource(s))?;
            return self
                .try_source(idx, dst_ip, dst_port, now)
                .ok_or(ProbeError::Backpressure);
        }
        let n = self.sources.len();
        for _ in 0..n {
            let idx = self.cursor % n;
            self.cursor = (self.cursor + 1) % n;
            if self.disabled.contains(&self.sources[idx]) {
                continue;
            }
            if let Some(k) = self.try_source(idx, dst_ip, dst_port, now) {
                return Ok(k);
            }
        }
        if self.active_sources().is_empty() {
            Err(ProbeError::NoSources)
        } else {
            Err(ProbeError::Backpressure)
        }
    }

    /// Marks a caller-chosen tuple as used, bypassing quarantine.
    pub fn force(&mut self, key: FlowKey, now: Micros) {
        self.last_used.insert(key, now);
    }
}

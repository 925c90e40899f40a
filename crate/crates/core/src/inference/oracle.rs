use std::net::Ipv4Addr;

use crate::blocklist::Protocol;
use crate::censorsim::World;
use crate::prober::{ProbeJob, ProbeRecord, Prober, Verdict};

use super::InferenceError;

/// Answers whether a name is censored.
pub trait Oracle {
    fn probe(&mut self, name: &str) -> Result<bool, InferenceError>;
}

impl<F: FnMut(&str) -> bool> Oracle for F {
    fn probe(&mut self, name: &str) -> Result<bool, InferenceError> {
        Ok(self(name))
    }
}

/// Runs a full probe per query against a filtered target in a world.
pub struct WorldOracle<'a> {
    pub world: &'a mut World,
    pub prober: &'a mut Prober,
    pub protocol: Protocol,
    pub target: Ipv4Addr,
    pub retries: u32,
    pub records: Vec<ProbeRecord>,
}

impl<'a> WorldOracle<'a> {
    pub fn new(world: &'a mut World, prober: &'a mut Prober, protocol: Protocol, target: Ipv4Addr) -> Self {
        WorldOracle {
            world,
            prober,
            protocol,
            target,
            retries: 3,
            records: Vec::new(),
        }
    }
}

impl Oracle for WorldOracle<'_> {
    fn probe(&mut self, name: &str) -> Result<bool, InferenceError> {
        for _ in 0..=self.retries {
            let rec = self
                .prober
                .run_job(self.world, ProbeJob::new(self.protocol, name, self.target))?;
            let verdict = rec.verdict;
            self.records.push(rec);
            match verdict {
                Verdict::Censored => return Ok(true),
                Verdict::NotCensored => return Ok(false),
                Verdict::SourceBanSuspected => {
                    return Err(InferenceError::Inconclusive(format!(
                        "source banned while probing {name:?}"
                    )))
                }
                Verdict::Inconclusive => {}
            }
        }
        Err(InferenceError::Inconclusive(format!(
            "probe for {name:?} stayed inconclusive"
        )))
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blocklist::{BlockRule, Protocol};

use super::{budget_for, InferenceError, Oracle};

const CONTEXT_LEN: usize = 8;
const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub probe: String,
    pub censored: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anchors {
    pub prefix_anchored: bool,
    pub suffix_anchored: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inferred {
    pub rule: BlockRule,
    pub probes_used: usize,
    pub transcript: Vec<TranscriptEntry>,
}

/// Budgeted, seeded query state for one seed domain.
pub struct InferenceSession<'o, O: Oracle> {
    pub seed_domain: String,
    pub protocol: Protocol,
    pub probe_budget: usize,
    pub rng_seed: u64,
    pub transcript: Vec<TranscriptEntry>,
    oracle: &'o mut O,
    rng: ChaCha8Rng,
}

impl<'o, O: Oracle> InferenceSession<'o, O> {
    pub fn new(seed_domain: &str, protocol: Protocol, oracle: &'o mut O, budget: usize, rng_seed: u64) -> Self {
        InferenceSession {
            seed_domain: seed_domain.to_ascii_lowercase(),
            protocol,
            probe_budget: budget,
            rng_seed,
            transcript: Vec::new(),
            oracle,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
        }
    }

    pub fn probes_used(&self) -> usize {
        self.transcript.len()
    }

    fn ask(&mut self, name: String, partial: &str) -> Result<bool, InferenceError> {
        if self.transcript.len() >= self.probe_budget {
            return Err(InferenceError::BudgetExhausted {
                budget: self.probe_budget,
                partial: partial.to_string(),
            });
        }
        let censored = self.oracle.probe(&name)?;
        log::debug!("probe {name} -> {censored}");
        self.transcript.push(TranscriptEntry { probe: name, censored });
        Ok(censored)
    }

    /// Random context whose byte next to the candidate differs from `avoid`.
    fn context(&mut self, avoid: Option<u8>, adjacent_last: bool) -> String {
        let mut s: Vec<u8> = (0..CONTEXT_LEN)
            .map(|_| ALPHABET[self.rng.gen_range(0..ALPHABET.len())])
            .collect();
        let at = if adjacent_last { CONTEXT_LEN - 1 } else { 0 };
        while Some(s[at]) == avoid.map(|b| b.to_ascii_lowercase()) {
            s[at] = ALPHABET[self.rng.gen_range(0..ALPHABET.len())];
        }
        String::from_utf8(s).expect("ascii")
    }

    /// Embeds `core` in fresh context on its unanchored sides. `head` and
    /// `tail` are the bytes just trimmed from each side, if any.
    fn embed(&mut self, core: &str, a: Anchors, head: Option<u8>, tail: Option<u8>) -> String {
        let pre = if a.prefix_anchored {
            String::new()
        } else {
            self.context(head, true)
        };
        let post = if a.suffix_anchored {
            String::new()
        } else {
            self.context(tail, false)
        };
        format!("{pre}{core}{post}")
    }

    pub fn detect_anchors(&mut self) -> Result<Anchors, InferenceError> {
        let seed = self.seed_domain.clone();
        if !self.ask(seed.clone(), &seed)? {
            return Err(InferenceError::SeedNotCensored(seed));
        }
        let side = |s: &mut Self, prefix: bool| -> Result<bool, InferenceError> {
            let mut answers = [false; 2];
            for a in &mut answers {
                let ctx = s.context(None, prefix);
                let name = if prefix {
                    format!("{ctx}{seed}")
                } else {
                    format!("{seed}{ctx}")
                };
                *a = !s.ask(name, &seed)?;
            }
            if answers[0] != answers[1] {
                let which = if prefix { "prefix" } else { "suffix" };
                return Err(InferenceError::Inconclusive(format!("{which} anchor tests disagree")));
            }
            Ok(answers[0])
        };
        let prefix_anchored = side(self, true)?;
        let suffix_anchored = side(self, false)?;
        Ok(Anchors {
            prefix_anchored,
            suffix_anchored,
        })
    }

    /// Linear trim from the head, then from the tail, on unanchored sides.
    pub fn minimize_core(&mut self, a: Anchors) -> Result<String, InferenceError> {
        let mut core = self.seed_domain.clone();
        if !a.prefix_anchored {
            while core.len() > 1 {
                let cand = core[1..].to_string();
                let name = self.embed(&cand, a, Some(core.as_bytes()[0]), None);
                if !self.ask(name, &core)? {
                    break;
                }
                core = cand;
            }
        }
        if !a.suffix_anchored {
            while core.len() > 1 {
                let cand = core[..core.len() - 1].to_string();
                let name = self.embed(&cand, a, None, Some(core.as_bytes()[core.len() - 1]));
                if !self.ask(name, &core)? {
                    break;
                }
                core = cand;
            }
        }
        Ok(core)
    }

    /// Confirms the core triggers in fresh context, that both one-byte
    /// trims on unanchored sides do not, and that random names do not.
    fn validate(&mut self, core: &str, a: Anchors) -> Result<(), InferenceError> {
        let name = self.embed(core, a, None, None);
        if !self.ask(name, core)? {
            return Err(InferenceError::Inconclusive(format!(
                "core {core:?} does not trigger in fresh context"
            )));
        }
        if core.len() > 1 {
            if !a.prefix_anchored {
                let name = self.embed(&core[1..], a, Some(core.as_bytes()[0]), None);
                if self.ask(name, core)? {
                    return Err(InferenceError::HypothesisViolation(format!(
                        "{:?} triggers after a longer candidate did not",
                        &core[1..]
                    )));
                }
            }
            if !a.suffix_anchored {
                let name = self.embed(&core[..core.len() - 1], a, None, Some(core.as_bytes()[core.len() - 1]));
                if self.ask(name, core)? {
                    return Err(InferenceError::HypothesisViolation(format!(
                        "{:?} triggers after a longer candidate did not",
                        &core[..core.len() - 1]
                    )));
                }
            }
        }
        for _ in 0..2 {
            let mut name;
            loop {
                name = format!("{}{}", self.context(None, true), self.context(None, true));
                if !name.contains(core) {
                    break;
                }
            }
            if self.ask(name.clone(), core)? {
                return Err(InferenceError::Inconclusive(format!(
                    "unrelated name {name:?} is censored"
                )));
            }
        }
        Ok(())
    }

    pub fn infer(&mut self) -> Result<Inferred, InferenceError> {
        let a = self.detect_anchors()?;
        let core = self.minimize_core(a)?;
        self.validate(&core, a)?;
        let rule = BlockRule::new(core, a.prefix_anchored, a.suffix_anchored)
            .map_err(|e| InferenceError::Inconclusive(e.to_string()))?;
        Ok(Inferred {
            rule,
            probes_used: self.transcript.len(),
            transcript: self.transcript.clone(),
        })
    }
}

pub fn detect_anchors<O: Oracle>(seed: &str, oracle: &mut O, rng_seed: u64) -> Result<Anchors, InferenceError> {
    InferenceSession::new(seed, Protocol::Dns, oracle, usize::MAX, rng_seed).detect_anchors()
}

pub fn minimize_core<O: Oracle>(
    seed: &str,
    anchors: Anchors,
    oracle: &mut O,
    rng_seed: u64,
) -> Result<String, InferenceError> {
    InferenceSession::new(seed, Protocol::Dns, oracle, usize::MAX, rng_seed).minimize_core(anchors)
}

/// Anchor detection, linear trim and validation within `budget` probes
/// (defaults to `4 * len + 8`).
pub fn infer_rule<O: Oracle>(
    seed: &str,
    protocol: Protocol,
    oracle: &mut O,
    budget: Option<usize>,
    rng_seed: u64,
) -> Result<Inferred, InferenceError> {
    let budget = budget.unwrap_or_else(|| budget_for(seed));
    InferenceSession::new(seed, protocol, oracle, budget, rng_seed).infer()
}

//! Reverse-engineering anchored-substring rules from probe answers, and
//! measuring what the recovered rules block.

mod impact;
mod oracle;
mod session;

pub use impact::{impact_report, impact_report_from_reader, ImpactEntry};
pub use oracle::{Oracle, WorldOracle};
pub use session::{detect_anchors, infer_rule, minimize_core, Anchors, InferenceSession, Inferred, TranscriptEntry};

use crate::prober::ProbeError;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InferenceError {
    #[error("seed domain {0:?} is not censored")]
    SeedNotCensored(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("responses violate the anchored-substring hypothesis: {0}")]
    HypothesisViolation(String),
    #[error("probe budget of {budget} exhausted; best core so far {partial:?}")]
    BudgetExhausted { budget: usize, partial: String },
    #[error(transparent)]
    Probe(#[from] ProbeError),
}

/// Probe bound for one linear-trim session.
pub fn budget_for(seed: &str) -> usize {
    4 * seed.len() + 8
}

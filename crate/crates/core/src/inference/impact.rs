use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blocklist::{classify_overblocking, match_corpus, BlockRule};

pub const SAMPLE_WITNESSES: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpactEntry {
    pub rule: String,
    pub count: usize,
    pub sample_witnesses: Vec<String>,
    pub overblocking: bool,
    pub overblocking_witnesses: Vec<String>,
}

/// Seed used for the over-blocking test when a rule's origin is unknown:
/// its core without surrounding dots.
fn implied_seed(rule: &BlockRule) -> String {
    rule.core.trim_matches('.').to_string()
}

/// Ranks rules by matched-name count, descending, ties by rule text.
pub fn impact_report_from_reader<R: BufRead>(rules: &[BlockRule], corpus: R) -> std::io::Result<Vec<ImpactEntry>> {
    let m = match_corpus(rules, corpus)?;
    let mut out: Vec<ImpactEntry> = m
        .per_rule
        .into_iter()
        .map(|hits| {
            let matched: Vec<String> = hits.matched.into_iter().collect();
            let ob = classify_overblocking(&hits.rule, &implied_seed(&hits.rule), &matched);
            ImpactEntry {
                rule: hits.rule.text(),
                count: matched.len(),
                sample_witnesses: matched.iter().take(SAMPLE_WITNESSES).cloned().collect(),
                overblocking: ob.overblocking,
                overblocking_witnesses: ob.witnesses.into_iter().take(SAMPLE_WITNESSES).collect(),
            }
        })
        .collect();
    out.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.rule.cmp(&b.rule)));
    Ok(out)
}

pub fn impact_report(rules: &[BlockRule], corpus_path: &Path) -> std::io::Result<Vec<ImpactEntry>> {
    let f = File::open(corpus_path)?;
    impact_report_from_reader(rules, BufReader::new(f))
}

use std::collections::BTreeSet;
use std::io::BufRead;

use aho_corasick::AhoCorasick;
use serde::{Deserialize, Serialize};

use super::BlockRule;

/// Matching names for one rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleHits {
    pub rule: BlockRule,
    pub matched: BTreeSet<String>,
}

impl RuleHits {
    pub fn count(&self) -> usize {
        self.matched.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusMatch {
    /// One entry per input rule, in input order.
    pub per_rule: Vec<RuleHits>,
    pub names_scanned: usize,
    pub malformed_lines: usize,
}

/// A host name line: ASCII labels of letters, digits, '-' and '_'.
pub fn valid_fqdn(name: &str) -> bool {
    let name = name.strip_suffix('.').unwrap_or(name);
    !name.is_empty()
        && name.len() <= 253
        && name.split('.').all(|l| {
            !l.is_empty() && l.len() <= 63 && l.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
        })
}

/// Multi-rule matcher: one automaton over all distinct cores, with anchors
/// checked per occurrence.
pub struct CorpusMatcher {
    rules: Vec<BlockRule>,
    automaton: AhoCorasick,
    /// Automaton pattern id to the rules sharing that core.
    owners: Vec<Vec<usize>>,
}

impl CorpusMatcher {
    pub fn new(rules: &[BlockRule]) -> Self {
        let mut cores: Vec<String> = Vec::new();
        let mut owners: Vec<Vec<usize>> = Vec::new();
        for (i, rule) in rules.iter().enumerate() {
            let core = rule.core.to_ascii_lowercase();
            match cores.iter().position(|c| *c == core) {
                Some(p) => owners[p].push(i),
                None => {
                    cores.push(core);
                    owners.push(vec![i]);
                }
            }
        }
        let automaton = AhoCorasick::new(&cores).expect("rule cores are plain literals");
        CorpusMatcher {
            rules: rules.to_vec(),
            automaton,
            owners,
        }
    }

    /// Indices of rules matching `name`, ascending, without duplicates.
    pub fn matching(&self, name: &str) -> Vec<usize> {
        let lower = name.to_ascii_lowercase();
        let mut hit = Vec::new();
        for m in self.automaton.find_overlapping_iter(&lower) {
            for &i in &self.owners[m.pattern().as_usize()] {
                if self.rules[i].accepts_span(m.start(), m.end(), lower.len()) {
                    hit.push(i);
                }
            }
        }
        hit.sort_unstable();
        hit.dedup();
        hit
    }
}

/// Scans the corpus once, streaming lines. Blank lines and `#` comments are
/// ignored; lines that are not host names are counted and skipped.
pub fn match_corpus<R: BufRead>(rules: &[BlockRule], corpus: R) -> std::io::Result<CorpusMatch> {
    let matcher = CorpusMatcher::new(rules);
    let mut out = CorpusMatch {
        per_rule: rules
            .iter()
            .map(|r| RuleHits {
                rule: r.clone(),
                matched: BTreeSet::new(),
            })
            .collect(),
        ..Default::default()
    };
    for line in corpus.lines() {
        let line = line?;
        let name = line.trim();
        if name.is_empty() || name.starts_with('#') {
            continue;
        }
        if !valid_fqdn(name) {
            out.malformed_lines += 1;
            continue;
        }
        out.names_scanned += 1;
        let name = name.strip_suffix('.').unwrap_or(name).to_ascii_lowercase();
        for i in matcher.matching(&name) {
            out.per_rule[i].matched.insert(name.clone());
        }
    }
    Ok(out)
}

/// Registered domain approximated by the last two labels. Wrong for
/// multi-label public suffixes such as "co.uk".
pub fn registered_domain(name: &str) -> String {
    let name = name.trim_end_matches('.').to_ascii_lowercase();
    let labels: Vec<&str> = name.rsplitn(3, '.').collect();
    match labels.as_slice() {
        [tld, sld, ..] => format!("{sld}.{tld}"),
        _ => name,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overblocking {
    pub overblocking: bool,
    pub witnesses: Vec<String>,
}

/// Flags a rule that matches names outside the seed domain's registered
/// domain.
pub fn classify_overblocking(rule: &BlockRule, seed_domain: &str, sample: &[String]) -> Overblocking {
    let own = registered_domain(seed_domain);
    let witnesses: Vec<String> = sample
        .iter()
        .filter(|n| rule.matches(n) && registered_domain(n) != own)
        .cloned()
        .collect();
    Overblocking {
        overblocking: !witnesses.is_empty(),
        witnesses,
    }
}

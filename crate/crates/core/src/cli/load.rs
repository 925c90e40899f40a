//! Line-oriented input files: domain lists, pfx2as tables and rule sets.
//!
//! Blank lines and `#` comments are skipped silently. Malformed lines are
//! counted; a file with more than 10% malformed lines is rejected.

use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use ipnet::Ipv4Net;
use serde::{Deserialize, Serialize};

use crate::blocklist::BlockRule;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {malformed} of {total} lines malformed (first at line {line}: {message})")]
    TooMalformed {
        path: PathBuf,
        malformed: usize,
        total: usize,
        line: usize,
        message: String,
    },
}

/// Parsed records plus the count of malformed lines that were skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub skipped: usize,
}

/// One pfx2as row: network, prefix length, and the origin ASes
/// (multi-origin entries are `_`- or `,`-separated).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pfx2AsEntry {
    pub network: Ipv4Addr,
    pub length: u8,
    pub asns: Vec<u32>,
}

impl Pfx2AsEntry {
    pub fn prefix(&self) -> Ipv4Net {
        Ipv4Net::new(self.network, self.length)
            .expect("length validated")
            .trunc()
    }
}

fn parse_lines<T>(
    text: &str,
    path: &Path,
    mut parse: impl FnMut(&str) -> Result<T, String>,
) -> Result<Loaded<T>, LoadError> {
    let mut records = Vec::new();
    let mut total = 0;
    let mut first_bad: Option<(usize, String)> = None;
    let mut skipped = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        total += 1;
        match parse(line) {
            Ok(r) => records.push(r),
            Err(e) => {
                skipped += 1;
                first_bad.get_or_insert((i + 1, e));
            }
        }
    }
    if skipped * 10 > total {
        let (line, message) = first_bad.expect("at least one malformed line");
        return Err(LoadError::TooMalformed {
            path: path.to_path_buf(),
            malformed: skipped,
            total,
            line,
            message,
        });
    }
    Ok(Loaded { records, skipped })
}

fn read(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Lowercased FQDN if `s` is a plausible host name.
pub fn parse_domain(s: &str) -> Result<String, String> {
    let d = s.trim_end_matches('.').to_ascii_lowercase();
    if d.is_empty() || d.len() > 253 {
        return Err(format!("bad domain length {}", d.len()));
    }
    for label in d.split('.') {
        if label.is_empty() || label.len() > 63 {
            return Err(format!("bad label in {s:?}"));
        }
        if !label
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
        {
            return Err(format!("invalid character in {s:?}"));
        }
    }
    Ok(d)
}

pub fn parse_domains(text: &str, path: &Path) -> Result<Loaded<String>, LoadError> {
    parse_lines(text, path, parse_domain)
}

pub fn load_domains(path: &Path) -> Result<Loaded<String>, LoadError> {
    parse_domains(&read(path)?, path)
}

pub fn parse_pfx2as_line(line: &str) -> Result<Pfx2AsEntry, String> {
    let cols: Vec<&str> = line.split('\t').collect();
    let [net, len, asn] = cols[..] else {
        return Err(format!("expected 3 tab-separated columns, got {}", cols.len()));
    };
    let network: Ipv4Addr = net.trim().parse().map_err(|_| format!("bad network {net:?}"))?;
    let length: u8 = len.trim().parse().map_err(|_| format!("bad length {len:?}"))?;
    if length > 32 {
        return Err(format!("prefix length {length} > 32"));
    }
    let asns = asn
        .trim()
        .split(['_', ','])
        .map(|a| a.trim().parse::<u32>().map_err(|_| format!("bad ASN {asn:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Pfx2AsEntry { network, length, asns })
}

pub fn parse_pfx2as(text: &str, path: &Path) -> Result<Loaded<Pfx2AsEntry>, LoadError> {
    parse_lines(text, path, parse_pfx2as_line)
}

pub fn load_pfx2as(path: &Path) -> Result<Loaded<Pfx2AsEntry>, LoadError> {
    parse_pfx2as(&read(path)?, path)
}

pub fn parse_rules(text: &str, path: &Path) -> Result<Loaded<BlockRule>, LoadError> {
    parse_lines(text, path, |l| BlockRule::parse(l).map_err(|e| e.to_string()))
}

pub fn load_rules(path: &Path) -> Result<Loaded<BlockRule>, LoadError> {
    parse_rules(&read(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("fixture")
    }

    #[test]
    fn pfx2as_row() {
        let e = parse_pfx2as_line("95.85.96.0\t19\t20661").unwrap();
        assert_eq!(e.network, Ipv4Addr::new(95, 85, 96, 0));
        assert_eq!(e.length, 19);
        assert_eq!(e.asns, vec![20661]);
        assert_eq!(e.prefix().to_string(), "95.85.96.0/19");
        assert_eq!(parse_pfx2as_line("1.2.3.0\t24\t10_20").unwrap().asns, vec![10, 20]);
        assert!(parse_pfx2as_line("1.2.3.0 24 10").is_err());
        assert!(parse_pfx2as_line("1.2.3.0\t33\t10").is_err());
    }

    #[test]
    fn comments_and_blanks_are_skipped() {
        let l = parse_domains("#comment\n\nTwitter.com\nexample.org.\n", p()).unwrap();
        assert_eq!(l.records, vec!["twitter.com", "example.org"]);
        assert_eq!(l.skipped, 0);
    }

    #[test]
    fn malformed_threshold() {
        let mut text: String = (0..9).map(|i| format!("d{i}.com\n")).collect();
        text.push_str("bad domain\n");
        let l = parse_domains(&text, p()).unwrap();
        assert_eq!((l.records.len(), l.skipped), (9, 1));
        text.push_str("also bad\n");
        let err = parse_domains(&text, p()).unwrap_err();
        assert!(
            matches!(
                err,
                LoadError::TooMalformed {
                    malformed: 2,
                    total: 11,
                    line: 10,
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn rule_table_texts() {
        let text = r".*\.cyou.*
.*vpn.*
.*porn.*
.*wn\.com.*
.*u\.to.*
.*w\.org.*
.*xx\.com.*
.*\.rocks.*
.*twitter\.com.*
.*yy\.com.*
";
        let l = parse_rules(text, p()).unwrap();
        assert_eq!(l.records.len(), 10);
        assert_eq!(l.records[3].to_string(), r".*wn\.com.*");
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_domains(Path::new("/nonexistent/x")),
            Err(LoadError::Io { .. })
        ));
    }
}

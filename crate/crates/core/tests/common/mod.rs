//! Seeded fixture generators shared by the integration targets.

#![allow(dead_code)]

use std::net::Ipv4Addr;

use censorlab::blocklist::BlockRule;
use censorlab::censorsim::{CensorConfig, PathSpec, World};
use rand::seq::SliceRandom;
use rand::Rng;

pub const TLDS: &[&str] = &["com", "net", "org", "tm", "ru", "io", "edu", "info", "cyou", "ua"];
pub const PREFIX: &str = "95.85.96.0/24";
pub const TARGET: Ipv4Addr = Ipv4Addr::new(95, 85, 96, 9);
pub const SOURCE: Ipv4Addr = Ipv4Addr::new(198, 51, 100, 10);

/// Anchor forms in `(prefix_anchored, suffix_anchored)` order.
pub const FORMS: [(bool, bool); 4] = [(false, false), (true, false), (false, true), (true, true)];

pub fn word<R: Rng>(rng: &mut R, min: usize, max: usize) -> String {
    let n = rng.gen_range(min..=max);
    (0..n).map(|_| rng.gen_range(b'a'..=b'z') as char).collect()
}

pub fn tld<R: Rng>(rng: &mut R) -> &'static str {
    TLDS.choose(rng).expect("non-empty")
}

/// A rule of the given anchor form plus a seed name it blocks, shaped
/// like real entries: `.name.tld` or `name.tld` cores when unanchored,
/// `name.` when prefix-anchored, `.name.tld` when suffix-anchored and a
/// full name when both.
pub fn rule_and_seed<R: Rng>(rng: &mut R, form: (bool, bool)) -> (BlockRule, String) {
    let w = word(rng, 4, 10);
    let t = tld(rng);
    let (core, seed) = match form {
        (false, false) => {
            if rng.gen_bool(0.5) {
                let core = format!(".{w}.{t}");
                (core.clone(), format!("{}{core}", word(rng, 3, 8)))
            } else {
                let core = format!("{w}.{t}");
                (core.clone(), format!("{}{core}", word(rng, 2, 6)))
            }
        }
        (true, false) => {
            let core = format!("{w}.");
            (core.clone(), format!("{core}{}.{}", word(rng, 3, 8), tld(rng)))
        }
        (false, true) => {
            let core = format!(".{w}.{t}");
            (core.clone(), format!("{}{core}", word(rng, 3, 8)))
        }
        (true, true) => {
            let core = format!("{w}.{t}");
            (core.clone(), core)
        }
    };
    (BlockRule::new(core, form.0, form.1).expect("valid core"), seed)
}

/// Another name blocked by `rule`, with random material on the free sides.
pub fn matching_name<R: Rng>(rng: &mut R, rule: &BlockRule) -> String {
    let head = if rule.prefix_anchored {
        String::new()
    } else {
        word(rng, 1, 6)
    };
    let tail = if rule.suffix_anchored {
        String::new()
    } else if rule.core.ends_with('.') {
        format!("{}.{}", word(rng, 2, 6), tld(rng))
    } else {
        format!(".{}", tld(rng))
    };
    format!("{head}{}{tail}", rule.core)
}

pub fn random_name<R: Rng>(rng: &mut R) -> String {
    if rng.gen_bool(0.3) {
        format!("{}.{}.{}", word(rng, 2, 6), word(rng, 3, 10), tld(rng))
    } else {
        format!("{}.{}", word(rng, 3, 12), tld(rng))
    }
}

/// Independent matcher: the rule's regex text compiled with full-match
/// semantics.
pub fn regex_oracle(rule: &BlockRule) -> regex::Regex {
    regex::Regex::new(&format!("^(?:{rule})$")).expect("rule text is a regex")
}

/// A world whose in-country /24 sits behind `hops` routers with the censor
/// after router `censor_after`.
pub fn world_with(config: CensorConfig, hops: Vec<Ipv4Addr>, censor_after: usize) -> World {
    let mut w = World::new(config);
    w.add_path(PathSpec {
        prefix: PREFIX.parse().expect("valid"),
        hops,
        censor_after,
    });
    w
}

pub fn standard_hops() -> Vec<Ipv4Addr> {
    (1..=6).map(|i| Ipv4Addr::new(10, 0, 0, i)).collect()
}

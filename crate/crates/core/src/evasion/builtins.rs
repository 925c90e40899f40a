use crate::time::SECOND;

use super::dsl::{parse_strategy, Strategy};
use super::EvasionError;

/// Default delay between the teardown packet and the SYN in free pass.
pub const FREE_PASS_DELAY: crate::time::Micros = SECOND;
pub const SANDWICH_PADDING: usize = 3391;
pub const DNS_COUNT_VALUE: u16 = 32;

/// Builtin name, strategy text, and the leaf delayed by
/// [`FREE_PASS_DELAY`], if any.
const CATALOG: &[(&str, &str, Option<usize>)] = &[
    ("segmentation-http", r"[TCP:flags:PA]-fragment{tcp:8:True}-| \/", None),
    (
        "segmentation-tls-record",
        r"[TCP:flags:PA]-fragment{tcp:5:True}-| \/",
        None,
    ),
    (
        "segmentation-tls-sni",
        r"[TCP:flags:PA]-fragment{tcp:65:True}-| \/",
        None,
    ),
    (
        "tcb-teardown-rst",
        r"[TCP:flags:S]-duplicate(,duplicate(tamper{TCP:flags:replace:R}(tamper{TCP:chksum:corrupt},),))-| \/",
        None,
    ),
    (
        "tcb-teardown-fin",
        r"[TCP:flags:S]-duplicate(,duplicate(tamper{TCP:flags:replace:F}(tamper{TCP:chksum:corrupt},),))-| \/",
        None,
    ),
    (
        "tcb-teardown-nonsense-flags",
        r"[TCP:flags:S]-duplicate(,duplicate(tamper{TCP:flags:replace:PRFS}(tamper{TCP:chksum:corrupt},),))-| \/",
        None,
    ),
    (
        "free-pass-client",
        r"[TCP:flags:S]-duplicate(tamper{TCP:flags:replace:R},)-| \/",
        Some(1),
    ),
    (
        "free-pass-client-fin",
        r"[TCP:flags:S]-duplicate(tamper{TCP:flags:replace:F},)-| \/",
        Some(1),
    ),
    (
        "free-pass-server-elicited",
        r"[TCP:flags:S]-duplicate(tamper{TCP:flags:replace:PA},)-| \/",
        Some(1),
    ),
    (
        "dns-elevated-count-qdcount",
        r"[DNS:*:*]-tamper{DNS:qdcount:replace:32}-| \/",
        None,
    ),
    (
        "dns-elevated-count-ancount",
        r"[DNS:*:*]-tamper{DNS:ancount:replace:32}-| \/",
        None,
    ),
    (
        "dns-elevated-count-nscount",
        r"[DNS:*:*]-tamper{DNS:nscount:replace:32}-| \/",
        None,
    ),
    (
        "dns-elevated-count-arcount",
        r"[DNS:*:*]-tamper{DNS:arcount:replace:32}-| \/",
        None,
    ),
    (
        "http-host-whitespace",
        r"[HTTP:host:*]-insert{%09%0A:start:value:1}-| \/",
        None,
    ),
    (
        "http-ws-after-version",
        r"[HTTP:version:*]-insert{%20%0A%09:end:value:1}-| \/",
        None,
    ),
    (
        "http-nl-before-method",
        r"[HTTP:method:*]-insert{%0A:start:value:1}-| \/",
        None,
    ),
    (
        "sandwich-v1",
        r"[HTTP:host:*]-insert{%20:end:value:3391}(duplicate(duplicate(,replace{a:name:1}),insert{%09:start:name:1}),)-| \/",
        None,
    ),
    (
        "sandwich-v2",
        r"[HTTP:host:*]-insert{%20:end:value:3391}(duplicate(duplicate(insert{%09:start:name:1},),replace{a:name:1}),)-| \/",
        None,
    ),
];

pub fn builtin_names() -> Vec<&'static str> {
    CATALOG.iter().map(|c| c.0).collect()
}

pub fn builtin(name: &str) -> Result<Strategy, EvasionError> {
    let (_, text, delayed) = CATALOG
        .iter()
        .find(|c| c.0 == name)
        .ok_or_else(|| EvasionError::UnknownBuiltin {
            name: name.to_string(),
            catalog: builtin_names().join(", "),
        })?;
    let s = parse_strategy(text).expect("catalog strategies parse");
    Ok(match delayed {
        Some(leaf) => s.with_leaf_delay(*leaf, FREE_PASS_DELAY),
        None => s,
    })
}

/// Segmentation at an arbitrary payload index.
pub fn segmentation_at(index: usize) -> Strategy {
    parse_strategy(&format!(r"[TCP:flags:PA]-fragment{{tcp:{index}:True}}-| \/")).expect("valid")
}

/// DNS header count tamper with an arbitrary value.
pub fn dns_count(field: &str, value: u16) -> Result<Strategy, EvasionError> {
    Ok(parse_strategy(&format!(
        r"[DNS:*:*]-tamper{{DNS:{field}:replace:{value}}}-| \/"
    ))?)
}

/// Sandwich variant 1 or 2 with `padding` spaces.
pub fn sandwich(version: u8, padding: usize) -> Strategy {
    let base = builtin(if version == 1 { "sandwich-v1" } else { "sandwich-v2" }).expect("catalog");
    let text = base.text().replace(":value:3391}", &format!(":value:{padding}}}"));
    parse_strategy(&text).expect("valid")
}

/// Free pass with the SYN sent `delay` after the teardown packet.
pub fn free_pass(delay: crate::time::Micros) -> Strategy {
    builtin("free-pass-client").expect("catalog").with_leaf_delay(1, delay)
}

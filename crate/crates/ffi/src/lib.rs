//! C ABI for censorlab.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_parse`
//! style constructors and released with the matching `*_free`. Every call
//! returns a [`ClStatus`]; on failure a thread-local message is available
//! from [`cl_last_error`]. Strings returned through out-parameters are owned
//! by the caller and released with [`cl_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::net::Ipv4Addr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use censorlab::blocklist::{BlockRule, CorpusMatcher};
use censorlab::censorsim::{Scenario, World};
use censorlab::evasion::{self, Lab, Strategy};
use censorlab::prober::{Prober, Verdict};
use censorlab::time::MILLISECOND;
use censorlab::Protocol;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    NotFound = 4,
    Invalid = 5,
    Failed = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClProtocol {
    Dns = 0,
    Http = 1,
    Https = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClVerdict {
    Censored = 0,
    NotCensored = 1,
    Inconclusive = 2,
    SourceBanSuspected = 3,
}

impl From<ClProtocol> for Protocol {
    fn from(p: ClProtocol) -> Self {
        match p {
            ClProtocol::Dns => Protocol::Dns,
            ClProtocol::Http => Protocol::Http,
            ClProtocol::Https => Protocol::Https,
        }
    }
}

impl From<Verdict> for ClVerdict {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Censored => ClVerdict::Censored,
            Verdict::NotCensored => ClVerdict::NotCensored,
            Verdict::Inconclusive => ClVerdict::Inconclusive,
            Verdict::SourceBanSuspected => ClVerdict::SourceBanSuspected,
        }
    }
}

/// A rule set with a compiled multi-rule matcher.
pub struct ClBlocklist {
    rules: Vec<BlockRule>,
    matcher: CorpusMatcher,
}

pub struct ClStrategy {
    inner: Strategy,
}

/// A scenario world with an outside prober attached.
pub struct ClWorld {
    world: World,
    prober: Prober,
}

const PROBE_SOURCE: Ipv4Addr = Ipv4Addr::new(198, 51, 100, 10);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Error(ClStatus, String);

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, converting errors and panics to a status and recording the
/// message.
fn guard(f: impl FnOnce() -> Result<(), Error>) -> ClStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ClStatus::Ok
        }
        Ok(Err(Error(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            ClStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Error> {
    if p.is_null() {
        return Err(Error(ClStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error(ClStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Error> {
    p.as_ref()
        .ok_or_else(|| Error(ClStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Error> {
    p.as_mut()
        .ok_or_else(|| Error(ClStatus::NullPointer, format!("{what} is null")))
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("no interior nul").into_raw()
}

/// Message describing the last failed call on this thread, or NULL. The
/// pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn cl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn cl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a rule and writes its canonical text to `*out`.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_rule_canonicalize(text: *const c_char, out_text: *mut *mut c_char) -> ClStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let slot = out(out_text, "out_text")?;
        let rule = BlockRule::parse(text).map_err(|e| Error(ClStatus::Parse, e.to_string()))?;
        *slot = owned_string(rule.text());
        Ok(())
    })
}

/// # Safety
/// `out_handle` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_blocklist_new(out_handle: *mut *mut ClBlocklist) -> ClStatus {
    guard(|| {
        let slot = out(out_handle, "out_handle")?;
        *slot = Box::into_raw(Box::new(ClBlocklist {
            rules: Vec::new(),
            matcher: CorpusMatcher::new(&[]),
        }));
        Ok(())
    })
}

/// # Safety
/// `h` must be a live blocklist handle; `rule` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cl_blocklist_add_rule(h: *mut ClBlocklist, rule: *const c_char) -> ClStatus {
    guard(|| {
        let b = out(h, "blocklist")?;
        let rule = BlockRule::parse(str_arg(rule, "rule")?).map_err(|e| Error(ClStatus::Parse, e.to_string()))?;
        if !b.rules.contains(&rule) {
            b.rules.push(rule);
            b.matcher = CorpusMatcher::new(&b.rules);
        }
        Ok(())
    })
}

/// # Safety
/// `h` must be a live blocklist handle; `out_len` writable.
#[no_mangle]
pub unsafe extern "C" fn cl_blocklist_len(h: *const ClBlocklist, out_len: *mut usize) -> ClStatus {
    guard(|| {
        *out(out_len, "out_len")? = handle(h, "blocklist")?.rules.len();
        Ok(())
    })
}

/// Whether any rule blocks `name`.
///
/// # Safety
/// `h` must be a live blocklist handle; `name` a NUL-terminated string;
/// `out_matched` writable.
#[no_mangle]
pub unsafe extern "C" fn cl_blocklist_matches(
    h: *const ClBlocklist,
    name: *const c_char,
    out_matched: *mut bool,
) -> ClStatus {
    guard(|| {
        let b = handle(h, "blocklist")?;
        let name = str_arg(name, "name")?;
        *out(out_matched, "out_matched")? = !b.matcher.matching(name).is_empty();
        Ok(())
    })
}

/// # Safety
/// `h` must be NULL or a blocklist handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cl_blocklist_free(h: *mut ClBlocklist) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// # Safety
/// `text` must be a NUL-terminated string; `out_handle` writable.
#[no_mangle]
pub unsafe extern "C" fn cl_strategy_parse(text: *const c_char, out_handle: *mut *mut ClStrategy) -> ClStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let slot = out(out_handle, "out_handle")?;
        let inner = evasion::parse_strategy(text).map_err(|e| Error(ClStatus::Parse, e.to_string()))?;
        *slot = Box::into_raw(Box::new(ClStrategy { inner }));
        Ok(())
    })
}

/// # Safety
/// `name` must be a NUL-terminated string; `out_handle` writable.
#[no_mangle]
pub unsafe extern "C" fn cl_strategy_builtin(name: *const c_char, out_handle: *mut *mut ClStrategy) -> ClStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        let slot = out(out_handle, "out_handle")?;
        let inner = evasion::builtin(name).map_err(|e| Error(ClStatus::NotFound, e.to_string()))?;
        *slot = Box::into_raw(Box::new(ClStrategy { inner }));
        Ok(())
    })
}

/// Canonical strategy text.
///
/// # Safety
/// `h` must be a live strategy handle; `out_text` writable.
#[no_mangle]
pub unsafe extern "C" fn cl_strategy_text(h: *const ClStrategy, out_text: *mut *mut c_char) -> ClStatus {
    guard(|| {
        let s = handle(h, "strategy")?;
        *out(out_text, "out_text")? = owned_string(s.inner.text());
        Ok(())
    })
}

/// # Safety
/// `h` must be NULL or a strategy handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cl_strategy_free(h: *mut ClStrategy) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

fn parse_scenario(json: &str) -> Result<Scenario, Error> {
    let s = Scenario::from_json(json).map_err(|e| Error(ClStatus::Parse, e.to_string()))?;
    if !s.blocklist_files.is_empty() {
        return Err(Error(
            ClStatus::Invalid,
            "blocklist_files are not resolved from JSON text; inline the rules".into(),
        ));
    }
    Ok(s)
}

/// Builds a world from a scenario JSON document (blocklists inline).
///
/// # Safety
/// `json` must be a NUL-terminated string; `out_handle` writable.
#[no_mangle]
pub unsafe extern "C" fn cl_world_from_scenario_json(json: *const c_char, out_handle: *mut *mut ClWorld) -> ClStatus {
    guard(|| {
        let json = str_arg(json, "json")?;
        let slot = out(out_handle, "out_handle")?;
        let s = parse_scenario(json)?;
        let world = s.build_world().map_err(|e| Error(ClStatus::Invalid, e.to_string()))?;
        let prober = Prober::new(vec![PROBE_SOURCE], s.seed);
        *slot = Box::into_raw(Box::new(ClWorld { world, prober }));
        Ok(())
    })
}

/// One probe of `domain` against `target_ip` (host byte order). TCP
/// protocols use a two-packet probe with `sleep_ms` between packets on
/// port 80 or 443; `sleep_ms` is ignored for DNS.
///
/// # Safety
/// `h` must be a live world handle; `domain` a NUL-terminated string;
/// `out_verdict` writable.
#[no_mangle]
pub unsafe extern "C" fn cl_world_probe(
    h: *mut ClWorld,
    protocol: ClProtocol,
    domain: *const c_char,
    target_ip: u32,
    sleep_ms: u64,
    out_verdict: *mut ClVerdict,
) -> ClStatus {
    guard(|| {
        let w = out(h, "world")?;
        let domain = str_arg(domain, "domain")?;
        let slot = out(out_verdict, "out_verdict")?;
        let target = Ipv4Addr::from(target_ip);
        let p = Protocol::from(protocol);
        let rec = match p {
            Protocol::Dns => w.prober.probe_dns(&mut w.world, domain, target, None),
            _ => {
                let port = if p == Protocol::Http { 80 } else { 443 };
                w.prober
                    .probe_tcp(&mut w.world, domain, p, target, port, sleep_ms * MILLISECOND, None)
            }
        }
        .map_err(|e| Error(ClStatus::Failed, e.to_string()))?;
        *slot = rec.verdict.into();
        Ok(())
    })
}

/// # Safety
/// `h` must be NULL or a world handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cl_world_free(h: *mut ClWorld) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Evaluates a strategy in worlds built from the scenario and writes the
/// report as JSON to `*out_json`. `client_ip` is in host byte order.
///
/// # Safety
/// `strategy` must be a live strategy handle; `scenario_json` and `domain`
/// NUL-terminated strings; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn cl_evaluate(
    strategy: *const ClStrategy,
    scenario_json: *const c_char,
    protocol: ClProtocol,
    domain: *const c_char,
    client_ip: u32,
    out_json: *mut *mut c_char,
) -> ClStatus {
    guard(|| {
        let s = handle(strategy, "strategy")?;
        let scenario = parse_scenario(str_arg(scenario_json, "scenario_json")?)?;
        let domain = str_arg(domain, "domain")?;
        let slot = out(out_json, "out_json")?;
        let lab = Lab::from_scenario(scenario, Ipv4Addr::from(client_ip));
        let report = evasion::evaluate(&s.inner, protocol.into(), domain, &lab).map_err(|e| match e {
            evasion::EvasionError::InvalidTrial(m) => Error(ClStatus::Invalid, m),
            other => Error(ClStatus::Failed, other.to_string()),
        })?;
        let json = serde_json::to_string(&report).map_err(|e| Error(ClStatus::Failed, e.to_string()))?;
        *slot = owned_string(json);
        Ok(())
    })
}

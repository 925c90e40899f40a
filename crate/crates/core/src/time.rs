//! Virtual time. All lab clocks count integer microseconds from zero.

/// A point in (or span of) virtual time, in microseconds.
pub type Micros = u64;

pub const MILLISECOND: Micros = 1_000;
pub const SECOND: Micros = 1_000_000;

pub const fn secs(s: u64) -> Micros {
    s * SECOND
}

pub const fn millis(ms: u64) -> Micros {
    ms * MILLISECOND
}

/// Fractional seconds rounded to the nearest microsecond.
pub fn secs_f64(s: f64) -> Micros {
    (s * SECOND as f64).round().max(0.0) as Micros
}

pub fn as_secs_f64(t: Micros) -> f64 {
    t as f64 / SECOND as f64
}

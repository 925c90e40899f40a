//! The censor's own parsers. They are deliberately narrower than the
//! endpoints' parsers; every rejection means the censor fails open.

use crate::netmodel::dns::{decode_dns, DnsMessage};
use crate::netmodel::tls::{CONTENT_HANDSHAKE, HANDSHAKE_CLIENT_HELLO};

fn find(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

fn find_ci(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w.eq_ignore_ascii_case(needle))
}

/// Position just past a complete `HTTP/1.d` token in `line`.
fn version_token_end(line: &[u8]) -> Option<usize> {
    let at = find(line, b"HTTP/1.")?;
    let digit = *line.get(at + 7)?;
    digit.is_ascii_digit().then_some(at + 8)
}

/// Whether a segment opens an HTTP request: no leading CR or LF, and the
/// first line carries a complete version token followed directly by CRLF,
/// by a CR ending the segment, or by the end of the segment.
pub fn is_http_request_start(seg: &[u8]) -> bool {
    if seg.is_empty() || matches!(seg[0], b'\r' | b'\n') {
        return false;
    }
    let line = match find(seg, b"\r\n") {
        Some(end) => &seg[..end],
        None => seg.strip_suffix(b"\r").unwrap_or(seg),
    };
    match version_token_end(line) {
        Some(end) => end == line.len(),
        None => false,
    }
}

/// Host of an HTTP request head as the censor reads it, limited to the
/// first `limit` bytes. Requires a request start, a `Host:` header whose
/// value does not begin with a tab or newline, and the blank line ending
/// the head, all within the limit.
pub fn lenient_http_host(buf: &[u8], limit: usize) -> Option<String> {
    let buf = &buf[..buf.len().min(limit)];
    if !is_http_request_start(buf) {
        return None;
    }
    let head_end = find(buf, b"\r\n\r\n")? + 2;
    let head = &buf[..head_end];
    let at = find_ci(head, b"\r\nhost:")? + 7;
    let mut i = at;
    while i < head.len() && head[i] == b' ' {
        i += 1;
    }
    if matches!(head.get(i), Some(b'\t' | b'\n' | b'\r') | None) {
        return None;
    }
    let rest = &head[i..];
    let end = rest
        .iter()
        .position(|&b| matches!(b, b' ' | b'\t' | b'\r' | b'\n'))
        .unwrap_or(rest.len());
    let name = std::str::from_utf8(&rest[..end]).ok()?;
    (!name.is_empty()).then(|| name.to_ascii_lowercase())
}

/// Finds a complete server_name extension anywhere in `seg` and returns
/// the first host name in it.
pub fn scan_sni_extension(seg: &[u8]) -> Option<String> {
    let u16_at = |i: usize| -> Option<usize> { Some(u16::from_be_bytes([*seg.get(i)?, *seg.get(i + 1)?]) as usize) };
    for i in 0..seg.len().saturating_sub(9) {
        if seg[i] != 0 || seg[i + 1] != 0 {
            continue;
        }
        let (Some(ext_len), Some(list_len)) = (u16_at(i + 2), u16_at(i + 4)) else {
            continue;
        };
        if ext_len < 5 || list_len + 2 != ext_len || seg[i + 6] != 0 {
            continue;
        }
        let Some(name_len) = u16_at(i + 7) else { continue };
        if name_len + 3 != list_len || name_len == 0 {
            continue;
        }
        let Some(name) = seg.get(i + 9..i + 9 + name_len) else {
            continue;
        };
        if name.iter().all(|b| b.is_ascii_graphic()) {
            return Some(String::from_utf8_lossy(name).to_ascii_lowercase());
        }
    }
    None
}

/// Per-direction TLS sniffing state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TlsSniff {
    /// Fewer than three bytes of a possible record seen so far.
    Sniffing(Vec<u8>),
    /// A ClientHello was recognized; later segments are scanned for SNI.
    Classified,
    /// Not TLS, or the record header arrived too fragmented to classify.
    Failed,
}

/// Bytes the censor needs in the segment that completes its first three
/// bytes of a record to classify a ClientHello.
pub const TLS_CLASSIFY_BYTES: usize = 9;

fn looks_like_record_start(seg: &[u8]) -> bool {
    seg.first() == Some(&CONTENT_HANDSHAKE) && seg.get(1).is_none_or(|&b| b == 0x03)
}

impl TlsSniff {
    /// Feeds one segment; returns the SNI seen in it, if any.
    pub fn feed(state: &mut Option<TlsSniff>, seg: &[u8], limit: usize) -> Option<String> {
        let seg = &seg[..seg.len().min(limit)];
        let restart = !matches!(state, Some(TlsSniff::Sniffing(_))) && looks_like_record_start(seg);
        if restart {
            *state = Some(TlsSniff::Sniffing(Vec::new()));
        }
        match state {
            Some(TlsSniff::Sniffing(buf)) => {
                buf.extend_from_slice(seg);
                if buf.len() < 3 {
                    return None;
                }
                let ok = buf[0] == CONTENT_HANDSHAKE
                    && buf[1] == 0x03
                    && buf.len() >= TLS_CLASSIFY_BYTES
                    && buf[5] == HANDSHAKE_CLIENT_HELLO;
                if ok {
                    *state = Some(TlsSniff::Classified);
                    scan_sni_extension(seg)
                } else {
                    *state = Some(TlsSniff::Failed);
                    None
                }
            }
            Some(TlsSniff::Classified) => scan_sni_extension(seg),
            _ => None,
        }
    }
}

/// Stateless view for a single segment holding a whole record start.
pub fn lenient_tls_sni(seg: &[u8], limit: usize) -> Option<String> {
    let mut state = None;
    TlsSniff::feed(&mut state, seg, limit)
}

/// Tolerant DNS parse used for injection decisions.
pub fn lenient_dns(payload: &[u8]) -> Option<DnsMessage> {
    decode_dns(payload).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::http::http_get;
    use crate::netmodel::tls::build_client_hello;

    const LIMIT: usize = 4096;

    #[test]
    fn canonical_request_is_read() {
        assert_eq!(
            lenient_http_host(&http_get("twitter.com").raw, LIMIT).as_deref(),
            Some("twitter.com")
        );
    }

    #[test]
    fn split_version_is_not_a_request() {
        assert!(!is_http_request_start(b"GET / HTTP/1"));
        assert!(!is_http_request_start(b".1\r\nHost: twitter.com\r\n\r\n"));
        assert!(is_http_request_start(b"GET / HTTP/1.1"));
        assert!(is_http_request_start(b"HTTP/1.1\r\nHost: a\r\n\r\n"));
        assert!(!is_http_request_start(b"\nGET / HTTP/1.1\r\n"));
        assert!(!is_http_request_start(b"GET / HTTP/1.1 \n\t\r\n"));
    }

    #[test]
    fn whitespace_before_host_value() {
        assert_eq!(
            lenient_http_host(b"GET / HTTP/1.1\r\nHost: \t\ntwitter.com\r\n\r\n", LIMIT),
            None
        );
        assert_eq!(
            lenient_http_host(b"GET / HTTP/1.1\r\nhost:   twitter.com   \r\n\r\n", LIMIT).as_deref(),
            Some("twitter.com")
        );
    }

    #[test]
    fn head_must_end_within_limit() {
        let mut raw = b"GET / HTTP/1.1\r\nHost: twitter.com".to_vec();
        raw.extend(std::iter::repeat_n(b' ', 100));
        raw.extend_from_slice(b"\r\n\r\n");
        assert!(lenient_http_host(&raw, raw.len()).is_some());
        assert!(lenient_http_host(&raw, raw.len() - 1).is_none());
    }

    #[test]
    fn tls_whole_hello_and_split_points() {
        let ch = build_client_hello("twitter.com");
        assert_eq!(lenient_tls_sni(&ch, LIMIT).as_deref(), Some("twitter.com"));
        for split in 1..ch.len() {
            let mut st = None;
            let a = TlsSniff::feed(&mut st, &ch[..split], LIMIT);
            let b = TlsSniff::feed(&mut st, &ch[split..], LIMIT);
            let seen = a.or(b).is_some();
            // server_name extension header starts 9 bytes before the name.
            let ext = 54..74;
            let expect = !(3..=8).contains(&split) && !(ext.start + 1..ext.end).contains(&split);
            assert_eq!(seen, expect, "split {split}");
        }
    }

    #[test]
    fn non_tls_fails_open() {
        let mut st = None;
        assert_eq!(TlsSniff::feed(&mut st, b"GET / HTTP/1.1\r\n", LIMIT), None);
        assert_eq!(st, None);
    }
}

//! HTTP/1.x request heads kept as raw bytes, with a span-based view that
//! never normalizes whitespace.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::CodecError;

fn is_ws(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\r' | b'\n')
}

fn find(hay: &[u8], needle: &[u8], from: usize) -> Option<usize> {
    if from > hay.len() {
        return None;
    }
    hay[from..]
        .windows(needle.len())
        .position(|w| w == needle)
        .map(|p| p + from)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeaderSpan {
    /// Whole header line, excluding its CRLF.
    pub line: Range<usize>,
    pub name: Range<usize>,
    /// Value with surrounding spaces and tabs excluded.
    pub value: Range<usize>,
}

/// Byte spans into [`HttpRequestBytes::raw`]. The gaps between spans are
/// the untouched separators, so the view always reproduces `raw`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpView {
    pub leading: Range<usize>,
    pub method: Range<usize>,
    pub target: Range<usize>,
    pub version: Range<usize>,
    /// Offset of the CRLF terminating the request line.
    pub request_line_end: usize,
    pub headers: Vec<HeaderSpan>,
    /// Offset just past the blank line, if the head is complete.
    pub head_end: Option<usize>,
}

impl HttpView {
    pub fn parse(raw: &[u8]) -> Option<HttpView> {
        let mut i = 0;
        while i < raw.len() && matches!(raw[i], b'\r' | b'\n') {
            i += 1;
        }
        let leading = 0..i;
        let token = |mut j: usize| {
            while j < raw.len() && matches!(raw[j], b' ' | b'\t') {
                j += 1;
            }
            let start = j;
            while j < raw.len() && !is_ws(raw[j]) {
                j += 1;
            }
            start..j
        };
        let method = token(i);
        let target = token(method.end);
        let version = token(target.end);
        if method.is_empty() || target.is_empty() || version.is_empty() {
            return None;
        }
        let request_line_end = find(raw, b"\r\n", version.end)?;
        let mut headers = Vec::new();
        let mut pos = request_line_end + 2;
        let head_end = loop {
            let Some(eol) = find(raw, b"\r\n", pos) else {
                break None;
            };
            if eol == pos {
                break Some(eol + 2);
            }
            let line = pos..eol;
            let colon = raw[line.clone()].iter().position(|&b| b == b':').map(|c| c + pos);
            let (name, value) = match colon {
                Some(c) => {
                    let mut vs = c + 1;
                    while vs < eol && matches!(raw[vs], b' ' | b'\t') {
                        vs += 1;
                    }
                    let mut ve = eol;
                    while ve > vs && matches!(raw[ve - 1], b' ' | b'\t') {
                        ve -= 1;
                    }
                    (pos..c, vs..ve)
                }
                None => (line.clone(), eol..eol),
            };
            headers.push(HeaderSpan { line, name, value });
            pos = eol + 2;
        };
        Some(HttpView {
            leading,
            method,
            target,
            version,
            request_line_end,
            headers,
            head_end,
        })
    }

    pub fn header(&self, raw: &[u8], name: &str) -> Option<&HeaderSpan> {
        self.headers
            .iter()
            .find(|h| raw[h.name.clone()].eq_ignore_ascii_case(name.as_bytes()))
    }

    /// Reassembles `raw` from the spans and the separators between them.
    pub fn serialize(&self, raw: &[u8]) -> Vec<u8> {
        let mut cuts = vec![
            self.leading.clone(),
            self.leading.end..self.method.start,
            self.method.clone(),
            self.method.end..self.target.start,
            self.target.clone(),
            self.target.end..self.version.start,
            self.version.clone(),
            self.version.end..self.request_line_end + 2,
        ];
        for h in &self.headers {
            cuts.push(h.line.start..h.name.end);
            cuts.push(h.name.end..h.value.start);
            cuts.push(h.value.clone());
            cuts.push(h.value.end..h.line.end + 2);
        }
        let tail = self
            .headers
            .last()
            .map(|h| h.line.end + 2)
            .unwrap_or(self.request_line_end + 2);
        cuts.push(tail..raw.len());
        cuts.into_iter().flat_map(|r| raw[r].iter().copied()).collect()
    }
}

/// Insertion points for request mutations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum HttpAnchor {
    BeforeMethod,
    AfterVersion,
    BeforeHostValue,
    AfterHostValue,
    BeforeHeader(String),
    AfterHeader(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpRequestBytes {
    pub raw: Vec<u8>,
}

impl HttpRequestBytes {
    pub fn new(raw: impl Into<Vec<u8>>) -> Self {
        HttpRequestBytes { raw: raw.into() }
    }

    pub fn view(&self) -> Option<HttpView> {
        HttpView::parse(&self.raw)
    }

    pub fn method(&self) -> Option<&[u8]> {
        self.view().map(|v| &self.raw[v.method])
    }

    pub fn version(&self) -> Option<&[u8]> {
        self.view().map(|v| &self.raw[v.version])
    }

    pub fn header_value(&self, name: &str) -> Option<&[u8]> {
        let v = self.view()?;
        let h = v.header(&self.raw, name)?;
        Some(&self.raw[h.value.clone()])
    }

    fn anchor_offset(&self, anchor: &HttpAnchor) -> Result<usize, CodecError> {
        let v = self
            .view()
            .ok_or_else(|| CodecError::Malformed("not an HTTP request head".into()))?;
        let missing = |what: &str| CodecError::Malformed(format!("request has no {what}"));
        Ok(match anchor {
            HttpAnchor::BeforeMethod => v.method.start,
            HttpAnchor::AfterVersion => v.version.end,
            HttpAnchor::BeforeHostValue => {
                v.header(&self.raw, "host")
                    .ok_or_else(|| missing("Host header"))?
                    .value
                    .start
            }
            HttpAnchor::AfterHostValue => {
                v.header(&self.raw, "host")
                    .ok_or_else(|| missing("Host header"))?
                    .value
                    .end
            }
            HttpAnchor::BeforeHeader(name) => v.header(&self.raw, name).ok_or_else(|| missing(name))?.line.start,
            HttpAnchor::AfterHeader(name) => v.header(&self.raw, name).ok_or_else(|| missing(name))?.line.end + 2,
        })
    }

    pub fn insert(&mut self, anchor: &HttpAnchor, bytes: &[u8]) -> Result<(), CodecError> {
        let at = self.anchor_offset(anchor)?;
        self.raw.splice(at..at, bytes.iter().copied());
        Ok(())
    }
}

/// `GET <path> <version>\r\nHost: <host>\r\n<extra headers>\r\n`.
pub fn build_http_get(host: &str, path: &str, version: &str, extra_headers: &[(&str, &str)]) -> HttpRequestBytes {
    let mut raw = format!("GET {path} {version}\r\nHost: {host}\r\n").into_bytes();
    for (name, value) in extra_headers {
        raw.extend_from_slice(name.as_bytes());
        raw.extend_from_slice(b": ");
        raw.extend_from_slice(value.as_bytes());
        raw.extend_from_slice(b"\r\n");
    }
    raw.extend_from_slice(b"\r\n");
    HttpRequestBytes { raw }
}

/// The canonical request used throughout the lab.
pub fn http_get(host: &str) -> HttpRequestBytes {
    build_http_get(host, "/", "HTTP/1.1", &[])
}

fn trim(mut s: &[u8]) -> &[u8] {
    while let [first, rest @ ..] = s {
        if is_ws(*first) {
            s = rest;
        } else {
            break;
        }
    }
    while let [rest @ .., last] = s {
        if is_ws(*last) {
            s = rest;
        } else {
            break;
        }
    }
    s
}

/// Host of a complete, well-formed request head as an origin server would
/// read it. Leading blank lines are skipped, linear whitespace around the
/// version and header values is ignored, and whitespace-prefixed lines
/// fold into the previous header (or are discarded right after the request
/// line). Exactly one Host header is required.
pub fn strict_http_host(buf: &[u8]) -> Option<String> {
    let mut start = 0;
    while start < buf.len() && matches!(buf[start], b'\r' | b'\n') {
        start += 1;
    }
    let end = find(buf, b"\r\n\r\n", start)?;
    let head = &buf[start..end + 2];
    let mut lines = head.split(|&b| b == b'\n').map(|l| l.strip_suffix(b"\r").unwrap_or(l));
    let request_line = lines.next()?;
    let parts: Vec<&[u8]> = trim(request_line)
        .split(|&b| b == b' ')
        .filter(|p| !p.is_empty())
        .collect();
    let [method, target, version] = parts.as_slice() else {
        return None;
    };
    if method.is_empty() || !method.iter().all(|b| b.is_ascii_uppercase()) {
        return None;
    }
    if target.is_empty() || !matches!(*version, b"HTTP/1.0" | b"HTTP/1.1") {
        return None;
    }
    // Bare LF splits lines too; rejoin pieces so that "Host: \t\nname"
    // keeps its value.
    let mut headers: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
    let mut pending: Option<(Vec<u8>, Vec<u8>)> = None;
    for line in lines {
        if line.is_empty() {
            continue;
        }
        if matches!(line[0], b' ' | b'\t') {
            if let Some((_, v)) = pending.as_mut() {
                v.push(b' ');
                v.extend_from_slice(trim(line));
            }
            continue;
        }
        match line.iter().position(|&b| b == b':') {
            Some(c) => {
                let name = &line[..c];
                if name.is_empty() || name.iter().any(|&b| is_ws(b) || !b.is_ascii_graphic()) {
                    return None;
                }
                if let Some(h) = pending.take() {
                    headers.push(h);
                }
                pending = Some((name.to_vec(), line[c + 1..].to_vec()));
            }
            None => {
                // Continuation of a value split by a bare LF.
                let (_, v) = pending.as_mut()?;
                v.push(b'\n');
                v.extend_from_slice(line);
            }
        }
    }
    headers.extend(pending);
    let mut hosts = headers.iter().filter(|(n, _)| n.eq_ignore_ascii_case(b"host"));
    let (_, value) = hosts.next()?;
    if hosts.next().is_some() {
        return None;
    }
    let value = trim(value);
    if value.is_empty() || value.iter().any(|&b| is_ws(b) || !b.is_ascii_graphic()) {
        return None;
    }
    String::from_utf8(value.to_vec()).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_request_bytes() {
        let r = http_get("twitter.com");
        assert_eq!(r.raw, b"GET / HTTP/1.1\r\nHost: twitter.com\r\n\r\n");
        assert_eq!(strict_http_host(&r.raw).as_deref(), Some("twitter.com"));
        assert_eq!(r.version(), Some(&b"HTTP/1.1"[..]));
    }

    #[test]
    fn padding_header_adds_exact_bytes() {
        let base = build_http_get("example.com", "/", "HTTP/1.1", &[]);
        let pad = " ".repeat(3391);
        let padded = build_http_get("example.com", "/", "HTTP/1.1", &[("X-Pad", &pad)]);
        // "X-Pad" + ": " + CRLF
        assert_eq!(padded.raw.len() - base.raw.len(), 3391 + 9);
    }

    #[test]
    fn view_reproduces_raw_with_odd_whitespace() {
        let raw = b"\n\nGET  /a \tHTTP/1.1 \n\t\r\nHost: \t\nx.y  \r\n\tHost: x.y\r\nX: 1\r\n\r\nbody".to_vec();
        let v = HttpView::parse(&raw).unwrap();
        assert_eq!(v.serialize(&raw), raw);
        assert_eq!(&raw[v.method.clone()], b"GET");
        assert_eq!(&raw[v.version.clone()], b"HTTP/1.1");
        assert!(v.head_end.is_some());
    }

    #[test]
    fn anchored_inserts() {
        let mut r = http_get("twitter.com");
        r.insert(&HttpAnchor::BeforeHostValue, b"\t\n").unwrap();
        assert_eq!(r.raw, b"GET / HTTP/1.1\r\nHost: \t\ntwitter.com\r\n\r\n");
        assert_eq!(strict_http_host(&r.raw).as_deref(), Some("twitter.com"));

        let mut r = http_get("twitter.com");
        r.insert(&HttpAnchor::AfterVersion, b" \n\t").unwrap();
        assert_eq!(strict_http_host(&r.raw).as_deref(), Some("twitter.com"));
        r.insert(&HttpAnchor::BeforeMethod, b"\n").unwrap();
        assert_eq!(r.raw[0], b'\n');
        assert_eq!(strict_http_host(&r.raw).as_deref(), Some("twitter.com"));

        let mut r = http_get("a.b");
        r.insert(&HttpAnchor::AfterHeader("host".into()), b"X-A: 1\r\n")
            .unwrap();
        r.insert(&HttpAnchor::BeforeHeader("host".into()), b"X-B: 2\r\n")
            .unwrap();
        assert_eq!(r.raw, b"GET / HTTP/1.1\r\nX-B: 2\r\nHost: a.b\r\nX-A: 1\r\n\r\n");
        assert!(r.insert(&HttpAnchor::BeforeHeader("cookie".into()), b"").is_err());
    }

    #[test]
    fn strict_rejects_malformed() {
        assert_eq!(strict_http_host(b"GET / HTTP/1.1\r\nHost: a.b\r\n"), None);
        assert_eq!(strict_http_host(b"GET / HTTP/1\r\nHost: a.b\r\n\r\n"), None);
        assert_eq!(
            strict_http_host(b"GET / HTTP/1.1\r\nHost: a.b\r\nHost: c.d\r\n\r\n"),
            None
        );
        assert_eq!(strict_http_host(b"GET / HTTP/1.1\r\nX: y\r\n\r\n"), None);
        assert_eq!(strict_http_host(b""), None);
        assert_eq!(strict_http_host(b"\x16\x03\x01\x00"), None);
    }

    #[test]
    fn folded_and_leading_whitespace_lines() {
        let raw = b"GET / HTTP/1.1\r\n\tHost: a.b\r\nHost: a.b   \r\na: a.b  \r\n\r\n";
        assert_eq!(strict_http_host(raw).as_deref(), Some("a.b"));
        let raw = b"GET / HTTP/1.1\r\nHost: a.b   \r\na: a.b\r\n\tHost: a.b\r\n\r\n";
        assert_eq!(strict_http_host(raw).as_deref(), Some("a.b"));
    }
}

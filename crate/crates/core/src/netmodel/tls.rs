//! Minimal TLS ClientHello construction and strict SNI extraction.

use std::ops::Range;

pub const CONTENT_HANDSHAKE: u8 = 0x16;
pub const HANDSHAKE_CLIENT_HELLO: u8 = 0x01;
pub const HANDSHAKE_SERVER_HELLO: u8 = 0x02;
pub const EXT_SERVER_NAME: u16 = 0x0000;

/// Offset of the first SNI name byte in [`build_client_hello`] output.
pub const SNI_NAME_OFFSET: usize = 63;

const CIPHER_SUITES: [u16; 2] = [0x1301, 0xc02f];

fn push_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn push_u24(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_be_bytes()[1..]);
}

/// A TLS 1.2 ClientHello record with a fixed layout: empty session id, two
/// cipher suites, null compression, server_name as the first extension
/// followed by supported_versions.
pub fn build_client_hello(sni: &str) -> Vec<u8> {
    let name = sni.as_bytes();
    let mut ext = Vec::new();
    push_u16(&mut ext, EXT_SERVER_NAME);
    push_u16(&mut ext, (name.len() + 5) as u16);
    push_u16(&mut ext, (name.len() + 3) as u16);
    ext.push(0);
    push_u16(&mut ext, name.len() as u16);
    ext.extend_from_slice(name);
    // supported_versions: TLS 1.3, 1.2
    ext.extend_from_slice(&[0x00, 0x2b, 0x00, 0x05, 0x04, 0x03, 0x04, 0x03, 0x03]);

    let mut body = vec![0x03, 0x03];
    body.extend((0..32u8).map(|i| i.wrapping_mul(37).wrapping_add(11)));
    body.push(0);
    push_u16(&mut body, (CIPHER_SUITES.len() * 2) as u16);
    for s in CIPHER_SUITES {
        push_u16(&mut body, s);
    }
    body.extend_from_slice(&[0x01, 0x00]);
    push_u16(&mut body, ext.len() as u16);
    body.extend_from_slice(&ext);

    let mut hs = vec![HANDSHAKE_CLIENT_HELLO];
    push_u24(&mut hs, body.len());
    hs.extend_from_slice(&body);

    let mut rec = vec![CONTENT_HANDSHAKE, 0x03, 0x01];
    push_u16(&mut rec, hs.len() as u16);
    rec.extend_from_slice(&hs);
    rec
}

/// Canned ServerHello record sent back by simulated servers.
pub fn server_hello_bytes() -> Vec<u8> {
    let mut body = vec![0x03, 0x03];
    body.extend((0..32u8).map(|i| i ^ 0xa5));
    body.push(0);
    push_u16(&mut body, CIPHER_SUITES[0]);
    body.push(0);
    push_u16(&mut body, 0);
    let mut hs = vec![HANDSHAKE_SERVER_HELLO];
    push_u24(&mut hs, body.len());
    hs.extend_from_slice(&body);
    let mut rec = vec![CONTENT_HANDSHAKE, 0x03, 0x03];
    push_u16(&mut rec, hs.len() as u16);
    rec.extend_from_slice(&hs);
    rec
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }
    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }
    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_be_bytes([b[0], b[1]]))
    }
    fn u24(&mut self) -> Option<usize> {
        self.take(3)
            .map(|b| (b[0] as usize) << 16 | (b[1] as usize) << 8 | b[2] as usize)
    }
}

/// Span of the host name inside a complete ClientHello record.
pub fn sni_span(buf: &[u8]) -> Option<Range<usize>> {
    let mut r = Reader { buf, pos: 0 };
    if r.u8()? != CONTENT_HANDSHAKE || r.u8()? != 0x03 {
        return None;
    }
    r.u8()?;
    let rec_len = r.u16()? as usize;
    if buf.len() < 5 + rec_len {
        return None;
    }
    if r.u8()? != HANDSHAKE_CLIENT_HELLO {
        return None;
    }
    let hs_len = r.u24()?;
    if hs_len + 4 > rec_len {
        return None;
    }
    let hs_end = r.pos + hs_len;
    r.take(2 + 32)?;
    let sid = r.u8()? as usize;
    r.take(sid)?;
    let cs = r.u16()? as usize;
    r.take(cs)?;
    let comp = r.u8()? as usize;
    r.take(comp)?;
    let ext_total = r.u16()? as usize;
    let ext_end = r.pos + ext_total;
    if ext_end > hs_end {
        return None;
    }
    while r.pos + 4 <= ext_end {
        let ty = r.u16()?;
        let len = r.u16()? as usize;
        let start = r.pos;
        r.take(len)?;
        if ty != EXT_SERVER_NAME {
            continue;
        }
        let mut e = Reader {
            buf: &buf[..start + len],
            pos: start,
        };
        let list = e.u16()? as usize;
        if list + 2 != len || e.u8()? != 0 {
            return None;
        }
        let n = e.u16()? as usize;
        if n + 3 != list {
            return None;
        }
        let at = e.pos;
        e.take(n)?;
        return Some(at..at + n);
    }
    None
}

/// Server name of a complete, well-formed ClientHello record.
pub fn strict_tls_sni(buf: &[u8]) -> Option<String> {
    let span = sni_span(buf)?;
    let name = std::str::from_utf8(&buf[span]).ok()?;
    (!name.is_empty() && name.bytes().all(|b| b.is_ascii_graphic())).then(|| name.to_string())
}

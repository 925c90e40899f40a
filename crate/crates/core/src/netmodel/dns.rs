//! DNS messages with declared section counts kept separate from the
//! records actually present, so count-tampered queries and malformed
//! injections can be expressed and recovered exactly.

use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::CodecError;

pub const HEADER_LEN: usize = 12;
pub const TYPE_A: u16 = 1;
pub const CLASS_IN: u16 = 1;
const MAX_LABEL: usize = 63;
const MAX_NAME: usize = 255;
const MAX_POINTER_HOPS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DnsFlags {
    pub qr: bool,
    pub opcode: u8,
    pub aa: bool,
    pub tc: bool,
    pub rd: bool,
    pub ra: bool,
    pub z: u8,
    pub rcode: u8,
}

impl DnsFlags {
    pub fn to_u16(self) -> u16 {
        (u16::from(self.qr) << 15)
            | (u16::from(self.opcode & 0x0f) << 11)
            | (u16::from(self.aa) << 10)
            | (u16::from(self.tc) << 9)
            | (u16::from(self.rd) << 8)
            | (u16::from(self.ra) << 7)
            | (u16::from(self.z & 0x07) << 4)
            | u16::from(self.rcode & 0x0f)
    }

    pub fn from_u16(v: u16) -> Self {
        DnsFlags {
            qr: v & 0x8000 != 0,
            opcode: ((v >> 11) & 0x0f) as u8,
            aa: v & 0x0400 != 0,
            tc: v & 0x0200 != 0,
            rd: v & 0x0100 != 0,
            ra: v & 0x0080 != 0,
            z: ((v >> 4) & 0x07) as u8,
            rcode: (v & 0x0f) as u8,
        }
    }
}

/// Header section counts as declared on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DnsCounts {
    pub qdcount: u16,
    pub ancount: u16,
    pub nscount: u16,
    pub arcount: u16,
}

impl DnsCounts {
    pub fn max(&self) -> u16 {
        self.qdcount.max(self.ancount).max(self.nscount).max(self.arcount)
    }
}

/// Partial replacement of declared counts; `None` keeps the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CountsOverride {
    pub qdcount: Option<u16>,
    pub ancount: Option<u16>,
    pub nscount: Option<u16>,
    pub arcount: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnsQuestion {
    pub qname: String,
    pub qtype: u16,
    pub qclass: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnsRecord {
    pub name: String,
    pub rtype: u16,
    pub class: u16,
    pub ttl: u32,
    pub rdata: Vec<u8>,
}

impl DnsRecord {
    pub fn a(name: &str, addr: Ipv4Addr, ttl: u32) -> Self {
        DnsRecord {
            name: name.to_string(),
            rtype: TYPE_A,
            class: CLASS_IN,
            ttl,
            rdata: addr.octets().to_vec(),
        }
    }

    pub fn a_addr(&self) -> Option<Ipv4Addr> {
        match (self.rtype, self.rdata.as_slice()) {
            (TYPE_A, [a, b, c, d]) => Some(Ipv4Addr::new(*a, *b, *c, *d)),
            _ => None,
        }
    }
}

/// A DNS message. Authority and additional records, when present on the
/// wire, are decoded into `answers`; the lab never produces them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnsMessage {
    pub id: u16,
    pub flags: DnsFlags,
    pub counts: DnsCounts,
    pub questions: Vec<DnsQuestion>,
    pub answers: Vec<DnsRecord>,
}

impl DnsMessage {
    /// Counts exactly matching the record lists.
    pub fn sync_counts(&mut self) {
        self.counts = DnsCounts {
            qdcount: self.questions.len() as u16,
            ancount: self.answers.len() as u16,
            nscount: 0,
            arcount: 0,
        };
    }

    pub fn counts_consistent(&self) -> bool {
        usize::from(self.counts.qdcount) == self.questions.len()
            && usize::from(self.counts.ancount) + usize::from(self.counts.nscount) + usize::from(self.counts.arcount)
                == self.answers.len()
    }

    /// A well-formed response answering every question with `addr`.
    pub fn a_response(query: &DnsMessage, addr: Ipv4Addr, ttl: u32) -> DnsMessage {
        let mut resp = DnsMessage {
            id: query.id,
            flags: DnsFlags {
                qr: true,
                rd: query.flags.rd,
                ra: true,
                ..DnsFlags::default()
            },
            counts: DnsCounts::default(),
            questions: query.questions.clone(),
            answers: query
                .questions
                .iter()
                .map(|q| DnsRecord::a(&q.qname, addr, ttl))
                .collect(),
        };
        resp.sync_counts();
        resp
    }

    pub fn encode(&self) -> Result<Vec<u8>, CodecError> {
        encode_dns(self)
    }
}

/// Builds a standard recursive A query. Default counts are qdcount=1 and
/// zero elsewhere; `counts_override` replaces declared counts only.
pub fn build_dns_query(
    qname: &str,
    id: u16,
    counts_override: Option<CountsOverride>,
) -> Result<DnsMessage, CodecError> {
    validate_name(qname)?;
    let mut msg = DnsMessage {
        id,
        flags: DnsFlags {
            rd: true,
            ..DnsFlags::default()
        },
        counts: DnsCounts::default(),
        questions: vec![DnsQuestion {
            qname: qname.to_string(),
            qtype: TYPE_A,
            qclass: CLASS_IN,
        }],
        answers: Vec::new(),
    };
    msg.sync_counts();
    if let Some(o) = counts_override {
        apply_override(&mut msg.counts, o);
    }
    Ok(msg)
}

pub fn apply_override(counts: &mut DnsCounts, o: CountsOverride) {
    if let Some(v) = o.qdcount {
        counts.qdcount = v;
    }
    if let Some(v) = o.ancount {
        counts.ancount = v;
    }
    if let Some(v) = o.nscount {
        counts.nscount = v;
    }
    if let Some(v) = o.arcount {
        counts.arcount = v;
    }
}

pub fn validate_name(name: &str) -> Result<(), CodecError> {
    let trimmed = name.strip_suffix('.').unwrap_or(name);
    if trimmed.is_empty() {
        return Ok(());
    }
    let mut wire = 1;
    for label in trimmed.split('.') {
        if label.is_empty() {
            return Err(CodecError::Malformed(format!("empty label in {name:?}")));
        }
        if label.len() > MAX_LABEL {
            return Err(CodecError::LabelTooLong(label.len()));
        }
        wire += label.len() + 1;
    }
    if wire > MAX_NAME {
        return Err(CodecError::Malformed(format!(
            "name of {wire} wire bytes exceeds {MAX_NAME}"
        )));
    }
    Ok(())
}

fn write_name(name: &str, out: &mut Vec<u8>) -> Result<(), CodecError> {
    validate_name(name)?;
    let trimmed = name.strip_suffix('.').unwrap_or(name);
    if !trimmed.is_empty() {
        for label in trimmed.split('.') {
            out.push(label.len() as u8);
            out.extend_from_slice(label.as_bytes());
        }
    }
    out.push(0);
    Ok(())
}

/// Encodes without name compression.
pub fn encode_dns(msg: &DnsMessage) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(512);
    out.extend_from_slice(&msg.id.to_be_bytes());
    out.extend_from_slice(&msg.flags.to_u16().to_be_bytes());
    for c in [
        msg.counts.qdcount,
        msg.counts.ancount,
        msg.counts.nscount,
        msg.counts.arcount,
    ] {
        out.extend_from_slice(&c.to_be_bytes());
    }
    for q in &msg.questions {
        write_name(&q.qname, &mut out)?;
        out.extend_from_slice(&q.qtype.to_be_bytes());
        out.extend_from_slice(&q.qclass.to_be_bytes());
    }
    for r in &msg.answers {
        write_name(&r.name, &mut out)?;
        out.extend_from_slice(&r.rtype.to_be_bytes());
        out.extend_from_slice(&r.class.to_be_bytes());
        out.extend_from_slice(&r.ttl.to_be_bytes());
        if r.rdata.len() > usize::from(u16::MAX) {
            return Err(CodecError::Malformed("rdata longer than 65535 bytes".into()));
        }
        out.extend_from_slice(&(r.rdata.len() as u16).to_be_bytes());
        out.extend_from_slice(&r.rdata);
    }
    Ok(out)
}

/// Reads a possibly compressed name starting at `pos`; returns the dotted
/// name and the offset just past it in the original position.
pub(crate) fn read_name(buf: &[u8], mut pos: usize) -> Result<(String, usize), CodecError> {
    let mut labels: Vec<String> = Vec::new();
    let mut resume: Option<usize> = None;
    let mut hops = 0;
    let mut wire = 1;
    loop {
        let len = *buf
            .get(pos)
            .ok_or_else(|| CodecError::truncated("DNS name", pos + 1, buf.len()))?;
        match len & 0xc0 {
            0x00 => {
                if len == 0 {
                    pos += 1;
                    break;
                }
                let start = pos + 1;
                let end = start + usize::from(len);
                let label = buf
                    .get(start..end)
                    .ok_or_else(|| CodecError::truncated("DNS label", end, buf.len()))?;
                if label.contains(&b'.') {
                    return Err(CodecError::Malformed("'.' inside a DNS label".into()));
                }
                let label =
                    std::str::from_utf8(label).map_err(|_| CodecError::Malformed("non-UTF-8 DNS label".into()))?;
                wire += label.len() + 1;
                if wire > MAX_NAME {
                    return Err(CodecError::Malformed("DNS name too long".into()));
                }
                labels.push(label.to_string());
                pos = end;
            }
            0xc0 => {
                let lo = *buf
                    .get(pos + 1)
                    .ok_or_else(|| CodecError::truncated("DNS pointer", pos + 2, buf.len()))?;
                hops += 1;
                if hops > MAX_POINTER_HOPS {
                    return Err(CodecError::Malformed("DNS compression loop".into()));
                }
                if resume.is_none() {
                    resume = Some(pos + 2);
                }
                pos = (usize::from(len & 0x3f) << 8) | usize::from(lo);
            }
            _ => return Err(CodecError::Malformed(format!("reserved DNS label type {len:#04x}"))),
        }
    }
    Ok((labels.join("."), resume.unwrap_or(pos)))
}

fn read_u16(buf: &[u8], pos: usize) -> Result<u16, CodecError> {
    buf.get(pos..pos + 2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .ok_or_else(|| CodecError::truncated("DNS field", pos + 2, buf.len()))
}

fn read_question(buf: &[u8], pos: usize) -> Result<(DnsQuestion, usize), CodecError> {
    let (qname, pos) = read_name(buf, pos)?;
    let qtype = read_u16(buf, pos)?;
    let qclass = read_u16(buf, pos + 2)?;
    Ok((DnsQuestion { qname, qtype, qclass }, pos + 4))
}

fn read_record(buf: &[u8], pos: usize) -> Result<(DnsRecord, usize), CodecError> {
    let (name, pos) = read_name(buf, pos)?;
    let rtype = read_u16(buf, pos)?;
    let class = read_u16(buf, pos + 2)?;
    let ttl = u32::from(read_u16(buf, pos + 4)?) << 16 | u32::from(read_u16(buf, pos + 6)?);
    let rdlen = usize::from(read_u16(buf, pos + 8)?);
    let start = pos + 10;
    let rdata = buf
        .get(start..start + rdlen)
        .ok_or_else(|| CodecError::truncated("DNS rdata", start + rdlen, buf.len()))?
        .to_vec();
    Ok((
        DnsRecord {
            name,
            rtype,
            class,
            ttl,
            rdata,
        },
        start + rdlen,
    ))
}

fn read_header(buf: &[u8]) -> Result<(u16, DnsFlags, DnsCounts), CodecError> {
    if buf.len() < HEADER_LEN {
        return Err(CodecError::truncated("DNS header", HEADER_LEN, buf.len()));
    }
    let counts = DnsCounts {
        qdcount: read_u16(buf, 4)?,
        ancount: read_u16(buf, 6)?,
        nscount: read_u16(buf, 8)?,
        arcount: read_u16(buf, 10)?,
    };
    Ok((read_u16(buf, 0)?, DnsFlags::from_u16(read_u16(buf, 2)?), counts))
}

fn records_to_end(buf: &[u8], mut pos: usize) -> Option<Vec<DnsRecord>> {
    let mut out = Vec::new();
    while pos < buf.len() {
        let (r, next) = read_record(buf, pos).ok()?;
        out.push(r);
        pos = next;
    }
    Some(out)
}

/// Tolerant decoder: declared counts are reported as-is and the record
/// lists reflect what is actually on the wire. The body is split into a
/// question run followed by a record run that consumes the buffer
/// exactly; when several splits fit, the declared qdcount wins, then the
/// fewest questions.
pub fn decode_dns(buf: &[u8]) -> Result<DnsMessage, CodecError> {
    let (id, flags, counts) = read_header(buf)?;
    let mut questions = Vec::new();
    let mut ends = vec![HEADER_LEN];
    let mut pos = HEADER_LEN;
    while pos < buf.len() {
        match read_question(buf, pos) {
            Ok((q, next)) => {
                questions.push(q);
                ends.push(next);
                pos = next;
            }
            Err(_) => break,
        }
    }
    let declared = usize::from(counts.qdcount);
    let order = std::iter::once(declared)
        .filter(|&k| k < ends.len())
        .chain((0..ends.len()).filter(|&k| k != declared));
    for k in order {
        if let Some(answers) = records_to_end(buf, ends[k]) {
            questions.truncate(k);
            return Ok(DnsMessage {
                id,
                flags,
                counts,
                questions,
                answers,
            });
        }
    }
    Err(CodecError::Malformed(
        "DNS body does not parse as questions followed by records".into(),
    ))
}

/// Strict decoder: exactly the declared number of questions and records
/// and no trailing bytes.
pub fn decode_dns_strict(buf: &[u8]) -> Option<DnsMessage> {
    let (id, flags, counts) = read_header(buf).ok()?;
    let mut pos = HEADER_LEN;
    let mut questions = Vec::with_capacity(usize::from(counts.qdcount).min(64));
    for _ in 0..counts.qdcount {
        let (q, next) = read_question(buf, pos).ok()?;
        questions.push(q);
        pos = next;
    }
    let total = usize::from(counts.ancount) + usize::from(counts.nscount) + usize::from(counts.arcount);
    let mut answers = Vec::new();
    for _ in 0..total {
        let (r, next) = read_record(buf, pos).ok()?;
        answers.push(r);
        pos = next;
    }
    if pos != buf.len() {
        return None;
    }
    Some(DnsMessage {
        id,
        flags,
        counts,
        questions,
        answers,
    })
}

/// Question names of a well-formed DNS message, in order.
pub fn strict_dns_qnames(buf: &[u8]) -> Vec<String> {
    decode_dns_strict(buf)
        .map(|m| m.questions.into_iter().map(|q| q.qname).collect())
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_query_counts() {
        let q = build_dns_query("twitter.com", 7, None).unwrap();
        assert_eq!(
            q.counts,
            DnsCounts {
                qdcount: 1,
                ..DnsCounts::default()
            }
        );
        assert_eq!(q.questions.len(), 1);
        assert!(q.answers.is_empty());
        assert_eq!(decode_dns(&q.encode().unwrap()).unwrap(), q);
    }

    #[test]
    fn override_changes_declared_counts_only() {
        let q = build_dns_query(
            "twitter.com",
            7,
            Some(CountsOverride {
                ancount: Some(32),
                ..CountsOverride::default()
            }),
        )
        .unwrap();
        assert_eq!(q.counts.ancount, 32);
        assert!(q.answers.is_empty());
        let back = decode_dns(&q.encode().unwrap()).unwrap();
        assert_eq!(back, q);
        assert!(decode_dns_strict(&q.encode().unwrap()).is_none());
    }

    #[test]
    fn long_label_rejected() {
        let label = "a".repeat(64);
        assert!(matches!(
            build_dns_query(&format!("{label}.com"), 1, None),
            Err(CodecError::LabelTooLong(64))
        ));
        assert!(build_dns_query(&format!("{}.com", "a".repeat(63)), 1, None).is_ok());
    }

    #[test]
    fn two_questions_returned_in_order() {
        let mut q = build_dns_query("first.example", 1, None).unwrap();
        q.questions.push(DnsQuestion {
            qname: "second.example".into(),
            qtype: TYPE_A,
            qclass: CLASS_IN,
        });
        q.sync_counts();
        assert_eq!(
            strict_dns_qnames(&q.encode().unwrap()),
            vec!["first.example".to_string(), "second.example".to_string()]
        );
    }

    #[test]
    fn extra_question_under_declared_count_one() {
        let mut q = build_dns_query("twitter.com", 9, None).unwrap();
        q.questions.push(q.questions[0].clone());
        let bytes = q.encode().unwrap();
        let back = decode_dns(&bytes).unwrap();
        assert_eq!(back.counts.qdcount, 1);
        assert_eq!(back.questions.len(), 2);
        assert!(decode_dns_strict(&bytes).is_none());
    }

    #[test]
    fn compression_pointers_are_followed() {
        // Response for "a.example" whose answer name points back at offset 12.
        let mut buf = vec![0x00, 0x01, 0x81, 0x80, 0, 1, 0, 1, 0, 0, 0, 0];
        buf.extend_from_slice(&[1, b'a', 7, b'e', b'x', b'a', b'm', b'p', b'l', b'e', 0, 0, 1, 0, 1]);
        buf.extend_from_slice(&[0xc0, 12, 0, 1, 0, 1, 0, 0, 0, 60, 0, 4, 1, 2, 3, 4]);
        let m = decode_dns_strict(&buf).unwrap();
        assert_eq!(m.answers[0].name, "a.example");
        assert_eq!(m.answers[0].a_addr(), Some(Ipv4Addr::new(1, 2, 3, 4)));
        assert_eq!(decode_dns(&buf).unwrap(), m);
    }

    #[test]
    fn pointer_loop_is_an_error() {
        let mut buf = vec![0, 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0];
        buf.extend_from_slice(&[0xc0, 12, 0, 1, 0, 1]);
        assert!(decode_dns_strict(&buf).is_none());
    }

    #[test]
    fn truncated_header() {
        assert!(decode_dns(&[0; 5]).is_err());
        assert!(strict_dns_qnames(&[0; 5]).is_empty());
    }
}

//! IPv4 envelopes carrying TCP, UDP or ICMP.

use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::checksum::{ones_complement_checksum, pseudo_header_sum, verify};
use super::CodecError;

pub const IPV4_HEADER_LEN: usize = 20;
pub const TCP_HEADER_LEN: usize = 20;
pub const UDP_HEADER_LEN: usize = 8;
pub const ICMP_HEADER_LEN: usize = 8;

pub const DEFAULT_TTL: u8 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IpProtocol {
    Icmp,
    Tcp,
    Udp,
}

impl IpProtocol {
    pub fn number(self) -> u8 {
        match self {
            IpProtocol::Icmp => 1,
            IpProtocol::Tcp => 6,
            IpProtocol::Udp => 17,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(IpProtocol::Icmp),
            6 => Some(IpProtocol::Tcp),
            17 => Some(IpProtocol::Udp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ipv4Header {
    pub version: u8,
    pub header_length_words: u8,
    pub dscp_ecn: u8,
    pub total_length: u16,
    pub identification: u16,
    /// Flags (3 bits) and fragment offset (13 bits), kept verbatim.
    pub flags_fragment: u16,
    pub ttl: u8,
    pub protocol: IpProtocol,
    pub header_checksum: u16,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
}

impl Ipv4Header {
    pub fn new(src: Ipv4Addr, dst: Ipv4Addr, protocol: IpProtocol) -> Self {
        Ipv4Header {
            version: 4,
            header_length_words: 5,
            dscp_ecn: 0,
            total_length: IPV4_HEADER_LEN as u16,
            identification: 0,
            flags_fragment: 0x4000, // DF
            ttl: DEFAULT_TTL,
            protocol,
            header_checksum: 0,
            src,
            dst,
        }
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.push((self.version << 4) | (self.header_length_words & 0x0f));
        out.push(self.dscp_ecn);
        out.extend_from_slice(&self.total_length.to_be_bytes());
        out.extend_from_slice(&self.identification.to_be_bytes());
        out.extend_from_slice(&self.flags_fragment.to_be_bytes());
        out.push(self.ttl);
        out.push(self.protocol.number());
        out.extend_from_slice(&self.header_checksum.to_be_bytes());
        out.extend_from_slice(&self.src.octets());
        out.extend_from_slice(&self.dst.octets());
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(IPV4_HEADER_LEN);
        self.write(&mut out);
        out
    }

    pub fn compute_checksum(&self) -> u16 {
        let mut copy = self.clone();
        copy.header_checksum = 0;
        ones_complement_checksum(&copy.to_bytes(), 0)
    }

    pub fn checksum_valid(&self) -> bool {
        verify(&self.to_bytes(), 0)
    }

    fn parse(buf: &[u8]) -> Result<Self, CodecError> {
        if buf.len() < IPV4_HEADER_LEN {
            return Err(CodecError::truncated("IPv4 header", IPV4_HEADER_LEN, buf.len()));
        }
        let version = buf[0] >> 4;
        let ihl = buf[0] & 0x0f;
        if version != 4 {
            return Err(CodecError::Malformed(format!("IP version {version}")));
        }
        if ihl < 5 {
            return Err(CodecError::Malformed(format!("IPv4 header length {ihl} words")));
        }
        if ihl > 5 {
            return Err(CodecError::Unsupported("IPv4 options".into()));
        }
        let protocol = IpProtocol::from_number(buf[9])
            .ok_or_else(|| CodecError::Unsupported(format!("IP protocol {}", buf[9])))?;
        Ok(Ipv4Header {
            version,
            header_length_words: ihl,
            dscp_ecn: buf[1],
            total_length: u16::from_be_bytes([buf[2], buf[3]]),
            identification: u16::from_be_bytes([buf[4], buf[5]]),
            flags_fragment: u16::from_be_bytes([buf[6], buf[7]]),
            ttl: buf[8],
            protocol,
            header_checksum: u16::from_be_bytes([buf[10], buf[11]]),
            src: Ipv4Addr::new(buf[12], buf[13], buf[14], buf[15]),
            dst: Ipv4Addr::new(buf[16], buf[17], buf[18], buf[19]),
        })
    }
}

/// TCP control bits. Letters follow the usual `FSRPAUEC` notation.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TcpFlags(pub u8);

impl TcpFlags {
    pub const FIN: TcpFlags = TcpFlags(0x01);
    pub const SYN: TcpFlags = TcpFlags(0x02);
    pub const RST: TcpFlags = TcpFlags(0x04);
    pub const PSH: TcpFlags = TcpFlags(0x08);
    pub const ACK: TcpFlags = TcpFlags(0x10);
    pub const URG: TcpFlags = TcpFlags(0x20);
    pub const ECE: TcpFlags = TcpFlags(0x40);
    pub const CWR: TcpFlags = TcpFlags(0x80);

    pub const PSH_ACK: TcpFlags = TcpFlags(0x18);
    pub const SYN_ACK: TcpFlags = TcpFlags(0x12);
    pub const RST_ACK: TcpFlags = TcpFlags(0x14);

    const LETTERS: [(char, u8); 8] = [
        ('F', 0x01),
        ('S', 0x02),
        ('R', 0x04),
        ('P', 0x08),
        ('A', 0x10),
        ('U', 0x20),
        ('E', 0x40),
        ('C', 0x80),
    ];

    pub fn contains(self, other: TcpFlags) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn intersects(self, other: TcpFlags) -> bool {
        self.0 & other.0 != 0
    }

    pub fn union(self, other: TcpFlags) -> TcpFlags {
        TcpFlags(self.0 | other.0)
    }

    /// Parses a letter string such as `"PA"` or `"FRPS"`.
    pub fn from_letters(s: &str) -> Option<TcpFlags> {
        let mut bits = 0u8;
        for c in s.chars() {
            let (_, b) = Self::LETTERS.iter().find(|(l, _)| *l == c.to_ascii_uppercase())?;
            bits |= b;
        }
        Some(TcpFlags(bits))
    }

    pub fn letters(self) -> String {
        Self::LETTERS
            .iter()
            .filter(|(_, b)| self.0 & b != 0)
            .map(|(l, _)| *l)
            .collect()
    }
}

impl fmt::Debug for TcpFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TcpFlags({})", self.letters())
    }
}

impl fmt::Display for TcpFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.letters())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcpSegment {
    pub src_port: u16,
    pub dst_port: u16,
    pub seq: u32,
    pub ack: u32,
    /// Low nibble of byte 12 (reserved bits), kept for exact round-trips.
    pub reserved: u8,
    pub flags: TcpFlags,
    pub window: u16,
    pub checksum: u16,
    pub urgent_ptr: u16,
    /// Raw option bytes; length must be a multiple of four.
    pub options: Vec<u8>,
    pub payload: Vec<u8>,
}

impl TcpSegment {
    pub fn new(src_port: u16, dst_port: u16, seq: u32, ack: u32, flags: TcpFlags) -> Self {
        TcpSegment {
            src_port,
            dst_port,
            seq,
            ack,
            reserved: 0,
            flags,
            window: 65535,
            checksum: 0,
            urgent_ptr: 0,
            options: Vec::new(),
            payload: Vec::new(),
        }
    }

    pub fn with_payload(mut self, payload: impl Into<Vec<u8>>) -> Self {
        self.payload = payload.into();
        self
    }

    pub fn header_len(&self) -> usize {
        TCP_HEADER_LEN + self.options.len()
    }

    pub fn wire_len(&self) -> usize {
        self.header_len() + self.payload.len()
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.src_port.to_be_bytes());
        out.extend_from_slice(&self.dst_port.to_be_bytes());
        out.extend_from_slice(&self.seq.to_be_bytes());
        out.extend_from_slice(&self.ack.to_be_bytes());
        let words = (self.header_len() / 4) as u8;
        out.push((words << 4) | (self.reserved & 0x0f));
        out.push(self.flags.0);
        out.extend_from_slice(&self.window.to_be_bytes());
        out.extend_from_slice(&self.checksum.to_be_bytes());
        out.extend_from_slice(&self.urgent_ptr.to_be_bytes());
        out.extend_from_slice(&self.options);
        out.extend_from_slice(&self.payload);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        self.write(&mut out);
        out
    }

    pub fn compute_checksum(&self, src: Ipv4Addr, dst: Ipv4Addr) -> u16 {
        let mut copy = self.clone();
        copy.checksum = 0;
        let bytes = copy.to_bytes();
        ones_complement_checksum(&bytes, pseudo_header_sum(src, dst, 6, bytes.len()))
    }

    pub fn checksum_valid(&self, src: Ipv4Addr, dst: Ipv4Addr) -> bool {
        let bytes = self.to_bytes();
        verify(&bytes, pseudo_header_sum(src, dst, 6, bytes.len()))
    }

    fn parse(buf: &[u8]) -> Result<Self, CodecError> {
        if buf.len() < TCP_HEADER_LEN {
            return Err(CodecError::truncated("TCP header", TCP_HEADER_LEN, buf.len()));
        }
        let header_len = usize::from(buf[12] >> 4) * 4;
        if header_len < TCP_HEADER_LEN {
            return Err(CodecError::Malformed(format!("TCP data offset {header_len} bytes")));
        }
        if buf.len() < header_len {
            return Err(CodecError::truncated("TCP options", header_len, buf.len()));
        }
        Ok(TcpSegment {
            src_port: u16::from_be_bytes([buf[0], buf[1]]),
            dst_port: u16::from_be_bytes([buf[2], buf[3]]),
            seq: u32::from_be_bytes([buf[4], buf[5], buf[6], buf[7]]),
            ack: u32::from_be_bytes([buf[8], buf[9], buf[10], buf[11]]),
            reserved: buf[12] & 0x0f,
            flags: TcpFlags(buf[13]),
            window: u16::from_be_bytes([buf[14], buf[15]]),
            checksum: u16::from_be_bytes([buf[16], buf[17]]),
            urgent_ptr: u16::from_be_bytes([buf[18], buf[19]]),
            options: buf[TCP_HEADER_LEN..header_len].to_vec(),
            payload: buf[header_len..].to_vec(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UdpDatagram {
    pub src_port: u16,
    pub dst_port: u16,
    pub length: u16,
    pub checksum: u16,
    pub payload: Vec<u8>,
}

impl UdpDatagram {
    pub fn new(src_port: u16, dst_port: u16, payload: impl Into<Vec<u8>>) -> Self {
        let payload = payload.into();
        UdpDatagram {
            src_port,
            dst_port,
            length: (UDP_HEADER_LEN + payload.len()) as u16,
            checksum: 0,
            payload,
        }
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.src_port.to_be_bytes());
        out.extend_from_slice(&self.dst_port.to_be_bytes());
        out.extend_from_slice(&self.length.to_be_bytes());
        out.extend_from_slice(&self.checksum.to_be_bytes());
        out.extend_from_slice(&self.payload);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(UDP_HEADER_LEN + self.payload.len());
        self.write(&mut out);
        out
    }

    pub fn compute_checksum(&self, src: Ipv4Addr, dst: Ipv4Addr) -> u16 {
        let mut copy = self.clone();
        copy.checksum = 0;
        let bytes = copy.to_bytes();
        match ones_complement_checksum(&bytes, pseudo_header_sum(src, dst, 17, bytes.len())) {
            // Zero means "no checksum" on the wire.
            0 => 0xffff,
            c => c,
        }
    }

    pub fn checksum_valid(&self, src: Ipv4Addr, dst: Ipv4Addr) -> bool {
        if self.checksum == 0 {
            return true;
        }
        let bytes = self.to_bytes();
        verify(&bytes, pseudo_header_sum(src, dst, 17, bytes.len()))
    }

    fn parse(buf: &[u8]) -> Result<Self, CodecError> {
        if buf.len() < UDP_HEADER_LEN {
            return Err(CodecError::truncated("UDP header", UDP_HEADER_LEN, buf.len()));
        }
        let length = u16::from_be_bytes([buf[4], buf[5]]);
        if usize::from(length) != buf.len() {
            return Err(CodecError::Malformed(format!(
                "UDP length {length} disagrees with {} available bytes",
                buf.len()
            )));
        }
        Ok(UdpDatagram {
            src_port: u16::from_be_bytes([buf[0], buf[1]]),
            dst_port: u16::from_be_bytes([buf[2], buf[3]]),
            length,
            checksum: u16::from_be_bytes([buf[6], buf[7]]),
            payload: buf[UDP_HEADER_LEN..].to_vec(),
        })
    }
}

/// ICMP message. Only Time-Exceeded is produced by the lab, but any
/// type/code round-trips.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IcmpMessage {
    pub icmp_type: u8,
    pub code: u8,
    pub checksum: u16,
    pub rest_of_header: u32,
    pub data: Vec<u8>,
}

impl IcmpMessage {
    pub const TIME_EXCEEDED: u8 = 11;

    /// Time-Exceeded (TTL expired in transit) quoting the original IP
    /// header plus the first eight transport bytes.
    pub fn time_exceeded(original: &PacketEnvelope) -> Self {
        let bytes = original.encode();
        let quoted = bytes.len().min(IPV4_HEADER_LEN + 8);
        let mut msg = IcmpMessage {
            icmp_type: Self::TIME_EXCEEDED,
            code: 0,
            checksum: 0,
            rest_of_header: 0,
            data: bytes[..quoted].to_vec(),
        };
        msg.checksum = msg.compute_checksum();
        msg
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.push(self.icmp_type);
        out.push(self.code);
        out.extend_from_slice(&self.checksum.to_be_bytes());
        out.extend_from_slice(&self.rest_of_header.to_be_bytes());
        out.extend_from_slice(&self.data);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(ICMP_HEADER_LEN + self.data.len());
        self.write(&mut out);
        out
    }

    pub fn compute_checksum(&self) -> u16 {
        let mut copy = self.clone();
        copy.checksum = 0;
        ones_complement_checksum(&copy.to_bytes(), 0)
    }

    /// The flow of the packet that expired, recovered from the quoted bytes.
    pub fn quoted_flow(&self) -> Option<FlowKey> {
        let ip = Ipv4Header::parse(self.data.get(..IPV4_HEADER_LEN)?).ok()?;
        let ports = self.data.get(IPV4_HEADER_LEN..IPV4_HEADER_LEN + 4)?;
        Some(FlowKey {
            src_ip: ip.src,
            src_port: u16::from_be_bytes([ports[0], ports[1]]),
            dst_ip: ip.dst,
            dst_port: u16::from_be_bytes([ports[2], ports[3]]),
        })
    }

    fn parse(buf: &[u8]) -> Result<Self, CodecError> {
        if buf.len() < ICMP_HEADER_LEN {
            return Err(CodecError::truncated("ICMP header", ICMP_HEADER_LEN, buf.len()));
        }
        Ok(IcmpMessage {
            icmp_type: buf[0],
            code: buf[1],
            checksum: u16::from_be_bytes([buf[2], buf[3]]),
            rest_of_header: u32::from_be_bytes([buf[4], buf[5], buf[6], buf[7]]),
            data: buf[ICMP_HEADER_LEN..].to_vec(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transport {
    Tcp(TcpSegment),
    Udp(UdpDatagram),
    Icmp(IcmpMessage),
}

/// The 4-tuple of a TCP or UDP flow as seen from the sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowKey {
    pub src_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_ip: Ipv4Addr,
    pub dst_port: u16,
}

impl FlowKey {
    pub fn reversed(self) -> FlowKey {
        FlowKey {
            src_ip: self.dst_ip,
            src_port: self.dst_port,
            dst_ip: self.src_ip,
            dst_port: self.src_port,
        }
    }

    /// Direction-independent form: the lexicographically smaller endpoint
    /// comes first, so both directions of a connection share one key.
    pub fn normalized(self) -> FlowKey {
        if (self.src_ip, self.src_port) <= (self.dst_ip, self.dst_port) {
            self
        } else {
            self.reversed()
        }
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{} > {}:{}",
            self.src_ip, self.src_port, self.dst_ip, self.dst_port
        )
    }
}

/// One IPv4 packet; the unit that crosses the simulated wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketEnvelope {
    pub ip: Ipv4Header,
    pub transport: Transport,
}

impl PacketEnvelope {
    /// A finalized TCP packet with default IP fields.
    pub fn tcp(src: Ipv4Addr, dst: Ipv4Addr, segment: TcpSegment) -> Self {
        let mut env = PacketEnvelope {
            ip: Ipv4Header::new(src, dst, IpProtocol::Tcp),
            transport: Transport::Tcp(segment),
        };
        env.finalize();
        env
    }

    pub fn udp(src: Ipv4Addr, dst: Ipv4Addr, datagram: UdpDatagram) -> Self {
        let mut env = PacketEnvelope {
            ip: Ipv4Header::new(src, dst, IpProtocol::Udp),
            transport: Transport::Udp(datagram),
        };
        env.finalize();
        env
    }

    pub fn icmp(src: Ipv4Addr, dst: Ipv4Addr, message: IcmpMessage) -> Self {
        let mut env = PacketEnvelope {
            ip: Ipv4Header::new(src, dst, IpProtocol::Icmp),
            transport: Transport::Icmp(message),
        };
        env.finalize();
        env
    }

    pub fn as_tcp(&self) -> Option<&TcpSegment> {
        match &self.transport {
            Transport::Tcp(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_tcp_mut(&mut self) -> Option<&mut TcpSegment> {
        match &mut self.transport {
            Transport::Tcp(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_udp(&self) -> Option<&UdpDatagram> {
        match &self.transport {
            Transport::Udp(u) => Some(u),
            _ => None,
        }
    }

    pub fn as_udp_mut(&mut self) -> Option<&mut UdpDatagram> {
        match &mut self.transport {
            Transport::Udp(u) => Some(u),
            _ => None,
        }
    }

    pub fn as_icmp(&self) -> Option<&IcmpMessage> {
        match &self.transport {
            Transport::Icmp(i) => Some(i),
            _ => None,
        }
    }

    /// Application payload for TCP and UDP, empty otherwise.
    pub fn payload(&self) -> &[u8] {
        match &self.transport {
            Transport::Tcp(t) => &t.payload,
            Transport::Udp(u) => &u.payload,
            Transport::Icmp(_) => &[],
        }
    }

    pub fn flow(&self) -> Option<FlowKey> {
        let (src_port, dst_port) = match &self.transport {
            Transport::Tcp(t) => (t.src_port, t.dst_port),
            Transport::Udp(u) => (u.src_port, u.dst_port),
            Transport::Icmp(_) => return None,
        };
        Some(FlowKey {
            src_ip: self.ip.src,
            src_port,
            dst_ip: self.ip.dst,
            dst_port,
        })
    }

    fn transport_len(&self) -> usize {
        match &self.transport {
            Transport::Tcp(t) => t.wire_len(),
            Transport::Udp(u) => UDP_HEADER_LEN + u.payload.len(),
            Transport::Icmp(i) => ICMP_HEADER_LEN + i.data.len(),
        }
    }

    /// Recomputes lengths and the IP header checksum, leaving the
    /// transport checksum untouched.
    pub fn finalize_ip(&mut self) {
        self.ip.protocol = match self.transport {
            Transport::Tcp(_) => IpProtocol::Tcp,
            Transport::Udp(_) => IpProtocol::Udp,
            Transport::Icmp(_) => IpProtocol::Icmp,
        };
        self.ip.total_length = (IPV4_HEADER_LEN + self.transport_len()) as u16;
        if let Transport::Udp(u) = &mut self.transport {
            u.length = (UDP_HEADER_LEN + u.payload.len()) as u16;
        }
        self.ip.header_checksum = self.ip.compute_checksum();
    }

    /// Recomputes every length and checksum field.
    pub fn finalize(&mut self) {
        self.finalize_ip();
        let (src, dst) = (self.ip.src, self.ip.dst);
        match &mut self.transport {
            Transport::Tcp(t) => t.checksum = t.compute_checksum(src, dst),
            Transport::Udp(u) => u.checksum = u.compute_checksum(src, dst),
            Transport::Icmp(i) => i.checksum = i.compute_checksum(),
        }
    }

    pub fn transport_checksum_valid(&self) -> bool {
        match &self.transport {
            Transport::Tcp(t) => t.checksum_valid(self.ip.src, self.ip.dst),
            Transport::Udp(u) => u.checksum_valid(self.ip.src, self.ip.dst),
            Transport::Icmp(i) => verify(&i.to_bytes(), 0),
        }
    }

    pub fn checksums_valid(&self) -> bool {
        self.ip.checksum_valid() && self.transport_checksum_valid()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(IPV4_HEADER_LEN + self.transport_len());
        self.ip.write(&mut out);
        match &self.transport {
            Transport::Tcp(t) => t.write(&mut out),
            Transport::Udp(u) => u.write(&mut out),
            Transport::Icmp(i) => i.write(&mut out),
        }
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self, CodecError> {
        let ip = Ipv4Header::parse(buf)?;
        let total = usize::from(ip.total_length);
        if total < IPV4_HEADER_LEN {
            return Err(CodecError::Malformed(format!("IPv4 total length {total}")));
        }
        if buf.len() < total {
            return Err(CodecError::truncated("IPv4 packet", total, buf.len()));
        }
        let body = &buf[IPV4_HEADER_LEN..total];
        let transport = match ip.protocol {
            IpProtocol::Tcp => Transport::Tcp(TcpSegment::parse(body)?),
            IpProtocol::Udp => Transport::Udp(UdpDatagram::parse(body)?),
            IpProtocol::Icmp => Transport::Icmp(IcmpMessage::parse(body)?),
        };
        Ok(PacketEnvelope { ip, transport })
    }

    /// One-line human summary used in traces.
    pub fn summary(&self) -> String {
        match &self.transport {
            Transport::Tcp(t) => format!(
                "TCP {}:{} > {}:{} [{}] seq={} ack={} len={} id={} ttl={}",
                self.ip.src,
                t.src_port,
                self.ip.dst,
                t.dst_port,
                t.flags,
                t.seq,
                t.ack,
                t.payload.len(),
                self.ip.identification,
                self.ip.ttl
            ),
            Transport::Udp(u) => format!(
                "UDP {}:{} > {}:{} len={} id={} ttl={}",
                self.ip.src,
                u.src_port,
                self.ip.dst,
                u.dst_port,
                u.payload.len(),
                self.ip.identification,
                self.ip.ttl
            ),
            Transport::Icmp(i) => format!(
                "ICMP {} > {} type={} code={} id={} ttl={}",
                self.ip.src, self.ip.dst, i.icmp_type, i.code, self.ip.identification, self.ip.ttl
            ),
        }
    }
}

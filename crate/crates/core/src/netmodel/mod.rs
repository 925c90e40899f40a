//! Packet codecs and application payload builders.

pub mod checksum;
pub mod dns;
pub mod http;
pub mod packet;
pub mod tls;

pub use dns::{DnsCounts, DnsMessage, DnsQuestion, DnsRecord};
pub use packet::{
    FlowKey, IcmpMessage, IpProtocol, Ipv4Header, PacketEnvelope, TcpFlags, TcpSegment, Transport, UdpDatagram,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("truncated {what}: need {need} bytes, have {have}")]
    Truncated {
        what: &'static str,
        need: usize,
        have: usize,
    },
    #[error("malformed: {0}")]
    Malformed(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("DNS label of {0} bytes exceeds 63")]
    LabelTooLong(usize),
}

impl CodecError {
    pub fn truncated(what: &'static str, need: usize, have: usize) -> Self {
        CodecError::Truncated { what, need, have }
    }
}

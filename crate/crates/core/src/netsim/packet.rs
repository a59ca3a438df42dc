use std::fmt;
use std::ops::{BitOr, BitOrAssign};

use crate::types::{Addr, Endpoint, Protocol};

/// TCP control bits carried by a simulated segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TcpFlags(u8);

impl TcpFlags {
    pub const FIN: TcpFlags = TcpFlags(0x01);
    pub const SYN: TcpFlags = TcpFlags(0x02);
    pub const RST: TcpFlags = TcpFlags(0x04);
    pub const PSH: TcpFlags = TcpFlags(0x08);
    pub const ACK: TcpFlags = TcpFlags(0x10);

    pub const SYN_ACK: TcpFlags = TcpFlags(0x12);
    pub const PSH_ACK: TcpFlags = TcpFlags(0x18);
    pub const RST_ACK: TcpFlags = TcpFlags(0x14);

    pub const fn empty() -> Self {
        TcpFlags(0)
    }

    pub const fn bits(self) -> u8 {
        self.0
    }

    pub const fn contains(self, other: TcpFlags) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn syn(self) -> bool {
        self.contains(Self::SYN)
    }

    pub fn ack(self) -> bool {
        self.contains(Self::ACK)
    }

    pub fn rst(self) -> bool {
        self.contains(Self::RST)
    }

    /// A bare SYN opening a connection.
    pub fn is_syn_only(self) -> bool {
        self.syn() && !self.ack() && !self.rst()
    }

    pub fn is_syn_ack(self) -> bool {
        self.syn() && self.ack() && !self.rst()
    }
}

impl BitOr for TcpFlags {
    type Output = TcpFlags;

    fn bitor(self, rhs: TcpFlags) -> TcpFlags {
        TcpFlags(self.0 | rhs.0)
    }
}

impl BitOrAssign for TcpFlags {
    fn bitor_assign(&mut self, rhs: TcpFlags) {
        self.0 |= rhs.0;
    }
}

impl fmt::Display for TcpFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut any = false;
        for (flag, c) in [
            (Self::SYN, 'S'),
            (Self::FIN, 'F'),
            (Self::RST, 'R'),
            (Self::PSH, 'P'),
            (Self::ACK, 'A'),
        ] {
            if self.contains(flag) {
                write!(f, "{c}")?;
                any = true;
            }
        }
        if !any {
            f.write_str(".")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TcpSegment {
    pub flags: TcpFlags,
    pub seq: u32,
    pub ack: u32,
    pub payload: Vec<u8>,
}

impl TcpSegment {
    pub fn new(flags: TcpFlags, seq: u32, ack: u32) -> Self {
        TcpSegment {
            flags,
            seq,
            ack,
            payload: Vec::new(),
        }
    }

    pub fn with_payload(mut self, payload: Vec<u8>) -> Self {
        self.payload = payload;
        self
    }

    pub fn payload_len(&self) -> u32 {
        self.payload.len() as u32
    }
}

/// Minimal DNS message: one question, at most one A answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnsMessage {
    pub txid: u16,
    pub qname: String,
    pub is_response: bool,
    pub answer: Option<Addr>,
    pub ttl_s: u32,
}

impl DnsMessage {
    pub fn query(txid: u16, qname: impl Into<String>) -> Self {
        DnsMessage {
            txid,
            qname: qname.into(),
            is_response: false,
            answer: None,
            ttl_s: 0,
        }
    }

    pub fn response(txid: u16, qname: impl Into<String>, answer: Option<Addr>, ttl_s: u32) -> Self {
        DnsMessage {
            txid,
            qname: qname.into(),
            is_response: true,
            answer,
            ttl_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UdpPayload {
    Raw(Vec<u8>),
    Dns(DnsMessage),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transport {
    Tcp(TcpSegment),
    Udp(UdpPayload),
}

/// A simulated L3/L4 datagram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub src: Endpoint,
    pub dst: Endpoint,
    pub ttl: u8,
    pub body: Transport,
    /// Set while the packet travels inside the VPN tunnel.
    pub via_tunnel: bool,
}

pub const DEFAULT_TTL: u8 = 64;

impl Packet {
    pub fn tcp(src: Endpoint, dst: Endpoint, seg: TcpSegment) -> Self {
        Packet {
            src,
            dst,
            ttl: DEFAULT_TTL,
            body: Transport::Tcp(seg),
            via_tunnel: false,
        }
    }

    pub fn udp(src: Endpoint, dst: Endpoint, payload: UdpPayload) -> Self {
        Packet {
            src,
            dst,
            ttl: DEFAULT_TTL,
            body: Transport::Udp(payload),
            via_tunnel: false,
        }
    }

    pub fn with_ttl(mut self, ttl: u8) -> Self {
        self.ttl = ttl;
        self
    }

    pub fn proto(&self) -> Protocol {
        match self.body {
            Transport::Tcp(_) => Protocol::Tcp,
            Transport::Udp(_) => Protocol::Udp,
        }
    }

    pub fn tcp_segment(&self) -> Option<&TcpSegment> {
        match &self.body {
            Transport::Tcp(seg) => Some(seg),
            Transport::Udp(_) => None,
        }
    }

    pub fn dns(&self) -> Option<&DnsMessage> {
        match &self.body {
            Transport::Udp(UdpPayload::Dns(m)) => Some(m),
            _ => None,
        }
    }

    pub fn raw_udp(&self) -> Option<&[u8]> {
        match &self.body {
            Transport::Udp(UdpPayload::Raw(b)) => Some(b),
            _ => None,
        }
    }
}

/// One-line summary used in trace records.
impl fmt::Display for Packet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}>{} ttl={}", self.proto(), self.src, self.dst, self.ttl)?;
        match &self.body {
            Transport::Tcp(seg) => write!(
                f,
                " flags={} seq={} ack={} len={}",
                seg.flags,
                seg.seq,
                seg.ack,
                seg.payload.len()
            ),
            Transport::Udp(UdpPayload::Raw(b)) => write!(f, " len={}", b.len()),
            Transport::Udp(UdpPayload::Dns(m)) => {
                write!(
                    f,
                    " dns={} txid={} qname={}",
                    if m.is_response { "resp" } else { "query" },
                    m.txid,
                    m.qname
                )?;
                if let Some(a) = m.answer {
                    write!(f, " answer={a}")?;
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_predicates() {
        assert!(TcpFlags::SYN.is_syn_only());
        assert!(!TcpFlags::SYN_ACK.is_syn_only());
        assert!(TcpFlags::SYN_ACK.is_syn_ack());
        assert!((TcpFlags::RST | TcpFlags::ACK).rst());
        assert_eq!(TcpFlags::PSH_ACK.to_string(), "PA");
        assert_eq!(TcpFlags::empty().to_string(), ".");
    }

    #[test]
    fn summary_is_stable() {
        let p = Packet::tcp(
            "10.8.0.2:40000".parse().unwrap(),
            "203.0.113.10:80".parse().unwrap(),
            TcpSegment::new(TcpFlags::SYN, 7, 0),
        );
        assert_eq!(
            p.to_string(),
            "tcp 10.8.0.2:40000>203.0.113.10:80 ttl=64 flags=S seq=7 ack=0 len=0"
        );
    }
}

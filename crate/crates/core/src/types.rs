//! Addresses, endpoints and virtual time shared by every subsystem.

use std::fmt;
use std::net::Ipv4Addr;
use std::ops::{Add, Sub};
use std::str::FromStr;

/// 32-bit host identifier. Rendered in dotted-quad form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Addr(pub u32);

impl Addr {
    pub const UNSPECIFIED: Addr = Addr(0);

    pub const fn new(a: u8, b: u8, c: u8, d: u8) -> Self {
        Addr(u32::from_be_bytes([a, b, c, d]))
    }

    pub fn is_unspecified(self) -> bool {
        self.0 == 0
    }
}

impl From<Ipv4Addr> for Addr {
    fn from(ip: Ipv4Addr) -> Self {
        Addr(u32::from(ip))
    }
}

impl From<Addr> for Ipv4Addr {
    fn from(a: Addr) -> Self {
        Ipv4Addr::from(a.0)
    }
}

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Ipv4Addr::from(*self).fmt(f)
    }
}

impl FromStr for Addr {
    type Err = std::net::AddrParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<Ipv4Addr>().map(Addr::from)
    }
}

/// An address/port pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Endpoint {
    pub addr: Addr,
    pub port: u16,
}

impl Endpoint {
    pub const fn new(addr: Addr, port: u16) -> Self {
        Endpoint { addr, port }
    }

    pub fn with_port(self, port: u16) -> Self {
        Endpoint { port, ..self }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.addr, self.port)
    }
}

impl FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, p) = s
            .rsplit_once(':')
            .ok_or_else(|| format!("expected addr:port, got {s:?}"))?;
        let addr = a.parse::<Addr>().map_err(|e| format!("{a:?}: {e}"))?;
        let port = p.parse::<u16>().map_err(|e| format!("{p:?}: {e}"))?;
        Ok(Endpoint { addr, port })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    Tcp,
    Udp,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Tcp => "tcp",
            Protocol::Udp => "udp",
        })
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tcp" => Ok(Protocol::Tcp),
            "udp" => Ok(Protocol::Udp),
            other => Err(format!("unknown protocol {other:?}")),
        }
    }
}

const MICROS_PER_SEC: u64 = 1_000_000;

/// Virtual time in microseconds since the start of a simulation.
///
/// Integer ticks keep event ordering exact; fractional seconds are accepted
/// at the edges and rounded to the nearest microsecond.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * MICROS_PER_SEC)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub fn from_secs_f64(s: f64) -> Self {
        assert!(s >= 0.0 && s.is_finite(), "negative or non-finite time {s}");
        SimTime((s * MICROS_PER_SEC as f64).round() as u64)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_SEC as f64
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn plus_secs(self, s: u64) -> Self {
        SimTime(self.0.saturating_add(s.saturating_mul(MICROS_PER_SEC)))
    }

    pub fn plus_secs_f64(self, s: f64) -> Self {
        SimTime(self.0.saturating_add(SimTime::from_secs_f64(s).0))
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;

    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl Sub for SimTime {
    type Output = SimTime;

    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / MICROS_PER_SEC, self.0 % MICROS_PER_SEC)
    }
}

/// Inclusive port range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PortRange {
    pub lo: u16,
    pub hi: u16,
}

impl PortRange {
    pub const EPHEMERAL: PortRange = PortRange { lo: 32768, hi: 65535 };
    pub const ALL: PortRange = PortRange { lo: 1, hi: 65535 };
    /// Everything above the well-known ports; the default inference sweep.
    pub const UNPRIVILEGED: PortRange = PortRange { lo: 1024, hi: 65535 };

    pub fn new(lo: u16, hi: u16) -> Self {
        assert!(lo <= hi, "empty port range {lo}-{hi}");
        PortRange { lo, hi }
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo) as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, port: u16) -> bool {
        (self.lo..=self.hi).contains(&port)
    }

    pub fn iter(&self) -> impl Iterator<Item = u16> {
        self.lo..=self.hi
    }
}

impl fmt::Display for PortRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lo, self.hi)
    }
}

impl FromStr for PortRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once('-').ok_or_else(|| format!("expected lo-hi, got {s:?}"))?;
        let lo = a.trim().parse::<u16>().map_err(|e| format!("{a:?}: {e}"))?;
        let hi = b.trim().parse::<u16>().map_err(|e| format!("{b:?}: {e}"))?;
        if lo > hi {
            return Err(format!("range {lo}-{hi} is empty"));
        }
        Ok(PortRange { lo, hi })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn addr_roundtrips_dotted_quad() {
        let a: Addr = "198.51.100.1".parse().unwrap();
        assert_eq!(a, Addr::new(198, 51, 100, 1));
        assert_eq!(a.to_string(), "198.51.100.1");
    }

    #[test]
    fn simtime_display_and_rounding() {
        assert_eq!(SimTime::from_secs_f64(1.25).to_string(), "1.250000");
        assert_eq!(SimTime::from_secs(120).plus_secs(1), SimTime::from_secs(121));
        assert_eq!(SimTime::from_secs_f64(0.0000004), SimTime::ZERO);
    }

    #[test]
    fn port_range_parse() {
        let r: PortRange = "50001-65535".parse().unwrap();
        assert_eq!(r.len(), 15535);
        assert!("9-3".parse::<PortRange>().is_err());
        assert_eq!(PortRange::EPHEMERAL.len(), 32768);
    }
}

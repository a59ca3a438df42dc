use std::collections::BTreeSet;

use crate::netsim::packet::{DnsMessage, Packet, TcpFlags, TcpSegment, Transport, UdpPayload};
use crate::netsim::{HostId, Ingress, Path, Sim};
use crate::types::{Endpoint, PortRange, Protocol};

use super::{gateway_public, paced, AttackReport, FailureReason, PhaseClock, Recovered};

#[derive(Debug, Clone, PartialEq)]
pub struct InferOptions {
    pub ports: PortRange,
    /// Probe plus verify packets per second.
    pub rate_pps: f64,
    pub probe_ttl: u8,
    /// Extra probe/verify rounds every active port must survive.
    pub rescreen: u32,
    /// More active ports than this means the scan itself was distorted.
    pub max_active: usize,
    /// Fewer returned verifies than this is too little to model a table limit.
    pub min_capacity: usize,
    /// How long to wait for probe entries to age out before a rescan.
    pub settle_s: Option<f64>,
    pub verify_wait_s: f64,
    /// Times a pass re-probes its holes to tell loss from real activity.
    pub confirm_rounds: u32,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions {
            ports: PortRange::UNPRIVILEGED,
            rate_pps: 35_000.0,
            probe_ttl: 2,
            rescreen: 2,
            max_active: 64,
            min_capacity: 1000,
            settle_s: None,
            verify_wait_s: 0.3,
            confirm_rounds: 3,
        }
    }
}

fn default_settle(proto: Protocol) -> f64 {
    match proto {
        Protocol::Tcp => 121.0,
        Protocol::Udp => 31.0,
    }
}

fn probe_packet(internal: Endpoint, remote: Endpoint, proto: Protocol, ttl: u8) -> Packet {
    match proto {
        Protocol::Tcp => Packet::tcp(internal, remote, TcpSegment::new(TcpFlags::SYN, 0, 0)),
        Protocol::Udp => Packet::udp(internal, remote, UdpPayload::Raw(b"probe".to_vec())),
    }
    .with_ttl(ttl)
}

/// Spoofed as coming from `remote`; carries the candidate port as a marker.
fn verify_packet(remote: Endpoint, public: Endpoint, proto: Protocol) -> Packet {
    let marker = public.port;
    match proto {
        Protocol::Tcp => Packet::tcp(remote, public, TcpSegment::new(TcpFlags::SYN_ACK, marker as u32, 1)),
        Protocol::Udp => Packet::udp(remote, public, UdpPayload::Raw(marker.to_be_bytes().to_vec())),
    }
}

fn marker_of(pkt: &Packet, remote: Endpoint, proto: Protocol) -> Option<u16> {
    if pkt.src != remote {
        return None;
    }
    match (&pkt.body, proto) {
        (Transport::Tcp(seg), Protocol::Tcp) if seg.flags.is_syn_ack() => u16::try_from(seg.seq).ok(),
        (Transport::Udp(UdpPayload::Raw(b)), Protocol::Udp) if b.len() == 2 => Some(u16::from_be_bytes([b[0], b[1]])),
        _ => None,
    }
}

/// One probe/verify pass. Returns the candidates whose verify came back.
fn scan(
    sim: &mut Sim,
    attacker: HostId,
    proto: Protocol,
    remote: Endpoint,
    ports: &[u16],
    opts: &InferOptions,
) -> BTreeSet<u16> {
    let internal = sim.attacker(attacker).internal;
    let public = gateway_public(sim);
    sim.attacker_mut(attacker).inbox.clear();
    let t0 = sim.now();
    for (i, &p) in ports.iter().enumerate() {
        let probe = probe_packet(Endpoint::new(internal, p), remote, proto, opts.probe_ttl);
        sim.emit_at(paced(t0, 2 * i, opts.rate_pps), attacker, probe, Path::Tunnel);
        let verify = verify_packet(remote, Endpoint::new(public, p), proto);
        sim.emit_at(paced(t0, 2 * i + 1, opts.rate_pps), attacker, verify, Path::Direct);
    }
    sim.run_until(paced(t0, 2 * ports.len(), opts.rate_pps).plus_secs_f64(opts.verify_wait_s));
    sim.attacker_mut(attacker)
        .take_inbox()
        .iter()
        .filter(|r| r.ingress == Ingress::Tunnel)
        .filter_map(|r| marker_of(&r.pkt, remote, proto))
        .collect()
}

/// `scan`, then re-probe the holes left before the last returned port.
/// Loss leaves few holes and nearly all of them come back on a second
/// try; anything else is left for `classify` to judge.
fn scan_confirmed(
    sim: &mut Sim,
    attacker: HostId,
    proto: Protocol,
    remote: Endpoint,
    ports: &[u16],
    opts: &InferOptions,
) -> BTreeSet<u16> {
    let mut back = scan(sim, attacker, proto, remote, ports, opts);
    for _ in 0..opts.confirm_rounds {
        let Some(last) = ports.iter().rposition(|p| back.contains(p)) else {
            break;
        };
        let holes: Vec<u16> = ports[..last].iter().copied().filter(|p| !back.contains(p)).collect();
        if holes.len() <= opts.max_active || holes.len() * 5 > last + 1 {
            break;
        }
        let again = scan(sim, attacker, proto, remote, &holes, opts);
        let recovered = again.len();
        back.extend(again);
        if recovered * 5 < holes.len() * 4 {
            break;
        }
    }
    back
}

enum Pattern {
    Clean,
    /// Verifies came back for a prefix of the scan, then stopped.
    Saturated {
        returned: usize,
    },
    Scattered,
}

fn classify(ports: &[u16], returned: &BTreeSet<u16>, opts: &InferOptions) -> Pattern {
    let active = ports.len() - ports.iter().filter(|p| returned.contains(p)).count();
    if active <= opts.max_active {
        return Pattern::Clean;
    }
    if returned.len() < opts.min_capacity {
        return Pattern::Scattered;
    }
    let last = ports.iter().rposition(|p| returned.contains(p)).unwrap_or(0);
    let holes = ports[..last].iter().filter(|p| !returned.contains(p)).count();
    if holes <= opts.max_active {
        Pattern::Saturated {
            returned: returned.len(),
        }
    } else {
        Pattern::Scattered
    }
}

/// Does a tunneled DNS query to ourselves come back out of the gateway?
fn dns_canary(sim: &mut Sim, attacker: HostId) -> bool {
    let a = sim.attacker(attacker);
    let (internal, public) = (a.internal, a.public);
    sim.attacker_mut(attacker).inbox.clear();
    let q = DnsMessage::query(0x5a5a, "canary.invalid");
    let pkt = Packet::udp(
        Endpoint::new(internal, 61000),
        Endpoint::new(public, 53),
        UdpPayload::Dns(q),
    );
    sim.send(attacker, pkt, Path::Tunnel);
    sim.run_for(0.5);
    sim.attacker_mut(attacker)
        .take_inbox()
        .iter()
        .any(|r| r.ingress == Ingress::Wire && r.pkt.dst.port == 53)
}

/// Find which public ports a VPN peer holds toward `remote`.
pub fn infer_ports(
    sim: &mut Sim,
    attacker: HostId,
    proto: Protocol,
    remote: Endpoint,
    opts: &InferOptions,
) -> AttackReport {
    let name = match proto {
        Protocol::Tcp => "infer_tcp",
        Protocol::Udp => "infer_dns",
    };
    let mut report = AttackReport::new(name);
    let candidates: Vec<u16> = opts.ports.iter().collect();

    let clock = PhaseClock::start(sim, attacker, "scan");
    let returned = scan_confirmed(sim, attacker, proto, remote, &candidates, opts);
    clock.finish(sim, &mut report);

    let mut active: Vec<u16> = match classify(&candidates, &returned, opts) {
        Pattern::Clean => candidates.iter().copied().filter(|p| !returned.contains(p)).collect(),
        Pattern::Saturated { returned: n } => {
            let clock = PhaseClock::start(sim, attacker, "rescan");
            let pending: Vec<u16> = candidates.iter().copied().filter(|p| !returned.contains(p)).collect();
            let capacity = (n * 9 / 10).max(1);
            let settle = opts.settle_s.unwrap_or_else(|| default_settle(proto));
            let mut still = Vec::new();
            let mut distorted = false;
            for batch in pending.chunks(capacity) {
                sim.run_for(settle);
                let back = scan_confirmed(sim, attacker, proto, remote, batch, opts);
                let missing: Vec<u16> = batch.iter().copied().filter(|p| !back.contains(p)).collect();
                if missing.len() > opts.max_active {
                    distorted = true;
                    break;
                }
                still.extend(missing);
            }
            clock.finish(sim, &mut report);
            if distorted || still.len() > opts.max_active {
                return report.fail(FailureReason::Inconclusive);
            }
            still
        }
        Pattern::Scattered => {
            if proto == Protocol::Udp && remote.port == 53 && returned.is_empty() && !dns_canary(sim, attacker) {
                return report.fail(FailureReason::Redirected);
            }
            return report.fail(FailureReason::Inconclusive);
        }
    };

    if !active.is_empty() && opts.rescreen > 0 {
        let clock = PhaseClock::start(sim, attacker, "rescreen");
        for _ in 0..opts.rescreen {
            let back = scan(sim, attacker, proto, remote, &active, opts);
            active.retain(|p| !back.contains(p));
        }
        clock.finish(sim, &mut report);
    }

    if active.is_empty() {
        return report.fail(FailureReason::NoActivePorts);
    }
    report.success = true;
    report.recovered = Some(Recovered::Ports(active));
    report
}

pub fn infer_tcp_port(sim: &mut Sim, attacker: HostId, server: Endpoint, opts: &InferOptions) -> AttackReport {
    infer_ports(sim, attacker, Protocol::Tcp, server, opts)
}

pub fn infer_dns_port(sim: &mut Sim, attacker: HostId, resolver: Endpoint, opts: &InferOptions) -> AttackReport {
    infer_ports(sim, attacker, Protocol::Udp, resolver, opts)
}

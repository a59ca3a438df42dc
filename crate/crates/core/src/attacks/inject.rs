use crate::endpoints::ConnState;
use crate::netsim::packet::{Packet, TcpFlags, TcpSegment, Transport};
use crate::netsim::{HostId, Ingress, Path, Sim};
use crate::types::Endpoint;

use super::{gateway_public, hops_to_gateway, AttackReport, FailureReason, PhaseClock};

#[derive(Debug, Clone, PartialEq)]
pub struct InjectOptions {
    pub victim: HostId,
    /// Wait for our own takeover entry to disappear before forging.
    pub self_evict_wait_s: f64,
    pub repeat_every_s: f64,
    pub duration_s: f64,
    pub rst_ttl: Option<u8>,
}

impl InjectOptions {
    pub fn new(victim: HostId) -> Self {
        InjectOptions {
            victim,
            self_evict_wait_s: 10.5,
            repeat_every_s: 0.01,
            duration_s: 120.0,
            rst_ttl: None,
        }
    }
}

/// Plant `payload` in the victim's stream once its next packet restores the
/// NAT entry, using the SEQ/ACK recovered by the takeover.
#[allow(clippy::too_many_arguments)]
pub fn tcp_inject(
    sim: &mut Sim,
    attacker: HostId,
    port: u16,
    server: Endpoint,
    seq: u32,
    ack: u32,
    payload: &[u8],
    opts: &InjectOptions,
) -> AttackReport {
    let mut report = AttackReport::new("tcp_inject");
    let victim_public = Endpoint::new(gateway_public(sim), port);
    let ttl = opts.rst_ttl.unwrap_or_else(|| hops_to_gateway(sim, attacker));

    let clock = PhaseClock::start(sim, attacker, "self_evict");
    let rst = Packet::tcp(server, victim_public, TcpSegment::new(TcpFlags::RST, 1, 0)).with_ttl(ttl);
    sim.send(attacker, rst, Path::Direct);
    sim.run_for(opts.self_evict_wait_s);
    clock.finish(sim, &mut report);

    let clock = PhaseClock::start(sim, attacker, "inject");
    let start = sim.now();
    let already = sim.client(opts.victim).log.accepted.len();
    let forged = TcpSegment::new(TcpFlags::PSH_ACK, seq, ack).with_payload(payload.to_vec());
    let end = start.plus_secs_f64(opts.duration_s);
    let mut t = start;
    let mut outcome = None;
    while t < end && outcome.is_none() {
        sim.send(
            attacker,
            Packet::tcp(server, victim_public, forged.clone()),
            Path::Direct,
        );
        t = t.plus_secs_f64(opts.repeat_every_s).min(end);
        sim.run_until(t);
        let client = sim.client(opts.victim);
        let fresh = &client.log.accepted[already..];
        if fresh.iter().any(|d| d.port == port && d.payload == payload) {
            outcome = Some(None);
        } else if client.conn(port).is_some_and(|c| c.state == ConnState::Reset) {
            outcome = Some(Some(FailureReason::ClientRstDesync));
        } else if fresh.iter().any(|d| d.port == port) {
            outcome = Some(Some(FailureReason::LegitDataFirst));
        }
    }
    clock.finish(sim, &mut report);
    match outcome {
        Some(None) => {
            report.success = true;
            report
        }
        Some(Some(reason)) => report.fail(reason),
        None => report.fail(FailureReason::NeverRestored),
    }
}

/// Speak on the victim's session from the takeover entry and read the
/// server's answer.
pub fn impersonate(
    sim: &mut Sim,
    attacker: HostId,
    port: u16,
    server: Endpoint,
    seq: u32,
    ack: u32,
    payload: &[u8],
) -> AttackReport {
    let mut report = AttackReport::new("impersonate");
    let internal = sim.attacker(attacker).internal;
    let clock = PhaseClock::start(sim, attacker, "impersonate");
    sim.attacker_mut(attacker).inbox.clear();
    let seg = TcpSegment::new(TcpFlags::PSH_ACK, ack, seq).with_payload(payload.to_vec());
    sim.send(
        attacker,
        Packet::tcp(Endpoint::new(internal, port), server, seg),
        Path::Tunnel,
    );
    sim.run_for(0.5);
    clock.finish(sim, &mut report);
    let answered = sim.attacker(attacker).inbox.iter().any(|r| {
        r.ingress == Ingress::Tunnel
            && r.pkt.src == server
            && r.pkt.dst.port == port
            && matches!(&r.pkt.body, Transport::Tcp(s) if !s.payload.is_empty())
    });
    if answered {
        report.success = true;
        report
    } else {
        report.fail(FailureReason::NoResponse)
    }
}

use crate::netsim::packet::{Packet, TcpFlags, TcpSegment};
use crate::netsim::{HostId, Path, Sim, TimerTag};
use crate::types::{Endpoint, PortRange, SimTime};

use super::{gateway_public, paced, AttackReport, FailureReason, PhaseClock, RefreshPlan};

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustOptions {
    /// Service the victim will later try to reach.
    pub target: Endpoint,
    pub victim: HostId,
    pub ports: PortRange,
    pub rate_pps: f64,
    /// Low enough to die before reaching the target.
    pub probe_ttl: u8,
    /// Push every occupied entry to ESTABLISHED with spoofed SYN/ACKs.
    pub escalate: bool,
    /// Re-send the whole flood this often, for as long as `hold_s`.
    pub refresh_period_s: Option<f64>,
    pub hold_s: f64,
    /// How long the victim gets to connect; the default spans every SYN
    /// retransmission of a default client.
    pub check_window_s: f64,
}

impl ExhaustOptions {
    pub fn new(target: Endpoint, victim: HostId) -> Self {
        ExhaustOptions {
            target,
            victim,
            ports: PortRange::ALL,
            rate_pps: 100_000.0,
            probe_ttl: 2,
            escalate: false,
            refresh_period_s: None,
            hold_s: 0.0,
            check_window_s: 64.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConnectProbe {
    pub port: u16,
    pub connected: bool,
    /// Gateway drops attributed to table capacity during the probe.
    pub table_full: u64,
    pub exhausted: u64,
    pub bypassed: u64,
}

/// Let the victim open a fresh session to `target` and watch for `window_s`.
pub fn victim_connect_probe(sim: &mut Sim, victim: HostId, target: Endpoint, window_s: f64) -> ConnectProbe {
    let before = sim.gateway().stats.clone();
    let port = sim.client_connect(victim, target, None);
    sim.run_for(window_s);
    let after = &sim.gateway().stats;
    let connected = sim
        .client(victim)
        .conn(port)
        .is_some_and(|c| c.established_at.is_some());
    ConnectProbe {
        port,
        connected,
        table_full: after.dropped("table_full") - before.dropped("table_full"),
        exhausted: after.dropped("exhausted") - before.dropped("exhausted"),
        bypassed: after.bypassed - before.bypassed,
    }
}

/// Occupy every public port toward `target` with half-open entries, then
/// check whether the victim can still connect there.
pub fn exhaust_ports(sim: &mut Sim, attacker: HostId, opts: &ExhaustOptions) -> AttackReport {
    let mut report = AttackReport::new("dos");
    let internal = sim.attacker(attacker).internal;
    let t0 = sim.now();
    let table_full_before = sim.gateway().stats.dropped("table_full");

    let clock = PhaseClock::start(sim, attacker, "flood");
    for (i, port) in opts.ports.iter().enumerate() {
        let syn = TcpSegment::new(TcpFlags::SYN, port as u32, 0);
        let pkt = Packet::tcp(Endpoint::new(internal, port), opts.target, syn).with_ttl(opts.probe_ttl);
        sim.emit_at(paced(t0, i, opts.rate_pps), attacker, pkt, Path::Tunnel);
    }
    sim.run_until(paced(t0, opts.ports.len(), opts.rate_pps).plus_secs_f64(0.1));
    clock.finish(sim, &mut report);

    if opts.escalate {
        let clock = PhaseClock::start(sim, attacker, "escalate");
        sim.attacker_mut(attacker).auto_ack_ttl = Some(opts.probe_ttl);
        let public = gateway_public(sim);
        let t1 = sim.now();
        for (i, q) in PortRange::ALL.iter().enumerate() {
            let sa = TcpSegment::new(TcpFlags::SYN_ACK, 0, 0);
            let pkt = Packet::tcp(opts.target, Endpoint::new(public, q), sa);
            sim.emit_at(paced(t1, i, opts.rate_pps), attacker, pkt, Path::Direct);
        }
        sim.run_until(paced(t1, PortRange::ALL.len(), opts.rate_pps).plus_secs_f64(0.2));
        sim.attacker_mut(attacker).auto_ack_ttl = None;
        clock.finish(sim, &mut report);
    }

    if let Some(period) = opts.refresh_period_s {
        let now = sim.now();
        sim.attacker_mut(attacker).refresh = Some(RefreshPlan {
            period: SimTime::from_secs_f64(period),
            target: opts.target,
            ports: opts.ports,
            ttl: opts.probe_ttl,
            rate_pps: opts.rate_pps,
            until: now.plus_secs_f64(opts.hold_s),
        });
        sim.schedule_timer(now.plus_secs_f64(period), attacker, TimerTag::Refresh);
    }
    sim.attacker_mut(attacker).inbox.clear();

    let clock = PhaseClock::start(sim, attacker, "victim_check");
    let probe = victim_connect_probe(sim, opts.victim, opts.target, opts.check_window_s);
    clock.finish(sim, &mut report);

    let table_full = sim.gateway().stats.dropped("table_full") - table_full_before;
    if probe.connected {
        let reason = if table_full > 0 {
            FailureReason::TableLimit
        } else {
            FailureReason::PortsAvailable
        };
        return report.fail(reason);
    }
    if probe.table_full > 0 && probe.exhausted == 0 && probe.bypassed == 0 {
        // Blocked only because the table is full, not because the ports are.
        return report.fail(FailureReason::TableLimit);
    }
    report.success = true;
    report
}

//! Attack programs that drive an attacker host inside a [`Sim`].
//!
//! Each program schedules packets, advances virtual time and reads what came
//! back to the attacker, then summarizes the run as an [`AttackReport`].

mod chain;
mod dns;
mod exhaust;
mod infer;
mod inject;
mod seqack;

use std::fmt::{self, Write as _};

use crate::netsim::packet::{Packet, TcpFlags, TcpSegment, Transport};
use crate::netsim::{Ctx, HostId, Ingress, Path, Sim, TimerTag};
use crate::types::{Addr, Endpoint, PortRange, SimTime};

pub use chain::{full_chain, ChainTarget, HijackMode};
pub use dns::{dns_inject, race_success_probability, DnsInjectOptions, TxidOrder};
pub use exhaust::{exhaust_ports, victim_connect_probe, ConnectProbe, ExhaustOptions};
pub use infer::{infer_dns_port, infer_ports, infer_tcp_port, InferOptions};
pub use inject::{impersonate, tcp_inject, InjectOptions};
pub use seqack::{acquire_seq_ack, rst_sweep_seqs, AcquireOptions, SWEEP_STRIDE};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Received {
    pub at: SimTime,
    pub pkt: Packet,
    pub ingress: Ingress,
}

#[derive(Debug, Clone, PartialEq)]
struct RefreshPlan {
    period: SimTime,
    target: Endpoint,
    ports: PortRange,
    ttl: u8,
    rate_pps: f64,
    until: SimTime,
}

/// The off-path attacker: a VPN client with its own internet address.
#[derive(Debug)]
pub struct AttackerHost {
    pub public: Addr,
    pub internal: Addr,
    pub inbox: Vec<Received>,
    /// Answer tunneled SYN/ACKs with an ACK carrying this TTL.
    pub auto_ack_ttl: Option<u8>,
    refresh: Option<RefreshPlan>,
}

impl AttackerHost {
    pub fn new(public: Addr) -> Self {
        AttackerHost {
            public,
            internal: Addr::UNSPECIFIED,
            inbox: Vec::new(),
            auto_ack_ttl: None,
            refresh: None,
        }
    }

    pub fn take_inbox(&mut self) -> Vec<Received> {
        std::mem::take(&mut self.inbox)
    }

    pub fn on_packet(&mut self, pkt: Packet, ingress: Ingress, ctx: &mut Ctx) {
        if let (Some(ttl), Ingress::Tunnel, Transport::Tcp(seg)) = (self.auto_ack_ttl, ingress, &pkt.body) {
            if seg.flags.is_syn_ack() {
                let ack = TcpSegment::new(TcpFlags::ACK, seg.ack, seg.seq.wrapping_add(1));
                ctx.send(Packet::tcp(pkt.dst, pkt.src, ack).with_ttl(ttl), Path::Tunnel);
            }
        }
        self.inbox.push(Received {
            at: ctx.now,
            pkt,
            ingress,
        });
    }

    pub fn on_timer(&mut self, tag: TimerTag, ctx: &mut Ctx) {
        if tag != TimerTag::Refresh {
            return;
        }
        let Some(plan) = self.refresh.clone() else {
            return;
        };
        if ctx.now >= plan.until {
            return;
        }
        for (i, port) in plan.ports.iter().enumerate() {
            let syn = TcpSegment::new(TcpFlags::SYN, port as u32, 0);
            let pkt = Packet::tcp(Endpoint::new(self.internal, port), plan.target, syn).with_ttl(plan.ttl);
            ctx.send_after(SimTime::from_secs_f64(i as f64 / plan.rate_pps), pkt, Path::Tunnel);
        }
        ctx.timer(plan.period, TimerTag::Refresh);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureReason {
    /// The flood could not occupy every port because the table filled up.
    TableLimit,
    PortsAvailable,
    NoActivePorts,
    Inconclusive,
    Redirected,
    RstRejected,
    EntryRefreshed,
    LegitDataFirst,
    ClientRstDesync,
    NeverRestored,
    TimeoutExpired,
    LegitResponseFirst,
    NoResponse,
}

impl FailureReason {
    pub fn label(&self) -> &'static str {
        match self {
            FailureReason::TableLimit => "table_limit",
            FailureReason::PortsAvailable => "ports_available",
            FailureReason::NoActivePorts => "no_active_ports",
            FailureReason::Inconclusive => "inconclusive",
            FailureReason::Redirected => "redirected",
            FailureReason::RstRejected => "rst_rejected",
            FailureReason::EntryRefreshed => "entry_refreshed",
            FailureReason::LegitDataFirst => "legit_data_first",
            FailureReason::ClientRstDesync => "client_rst_desync",
            FailureReason::NeverRestored => "never_restored",
            FailureReason::TimeoutExpired => "timeout_expired",
            FailureReason::LegitResponseFirst => "legit_response_first",
            FailureReason::NoResponse => "no_response",
        }
    }
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Recovered {
    Ports(Vec<u16>),
    SeqAck { seq: u32, ack: u32 },
    Txid(u16),
}

impl fmt::Display for Recovered {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Recovered::Ports(p) => {
                f.write_str("ports=")?;
                for (i, x) in p.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{x}")?;
                }
                Ok(())
            }
            Recovered::SeqAck { seq, ack } => write!(f, "seq={seq} ack={ack}"),
            Recovered::Txid(t) => write!(f, "txid={t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub name: String,
    pub virtual_s: f64,
    pub packets_sent: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub attack: String,
    pub success: bool,
    pub phases: Vec<Phase>,
    pub recovered: Option<Recovered>,
    pub failure_reason: Option<FailureReason>,
}

impl AttackReport {
    pub fn new(attack: &str) -> Self {
        AttackReport {
            attack: attack.to_string(),
            success: false,
            phases: Vec::new(),
            recovered: None,
            failure_reason: None,
        }
    }

    pub fn fail(mut self, reason: FailureReason) -> Self {
        self.success = false;
        self.failure_reason = Some(reason);
        self
    }

    pub fn virtual_s(&self) -> f64 {
        self.phases.iter().map(|p| p.virtual_s).sum()
    }

    pub fn packets_sent(&self) -> u64 {
        self.phases.iter().map(|p| p.packets_sent).sum()
    }

    /// Append another report's phases, keeping its outcome.
    pub fn absorb(&mut self, other: AttackReport) {
        self.phases.extend(other.phases);
        self.success = other.success;
        self.failure_reason = other.failure_reason;
        if other.recovered.is_some() {
            self.recovered = other.recovered;
        }
    }

    /// Key=value record lines: a header, one line per phase.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "report attack={} success={} virtual_s={:.6} packets={}",
            self.attack,
            self.success,
            self.virtual_s(),
            self.packets_sent()
        );
        if let Some(r) = &self.recovered {
            let _ = write!(s, " {r}");
        }
        if let Some(r) = self.failure_reason {
            let _ = write!(s, " failure_reason={r}");
        }
        s.push('\n');
        for p in &self.phases {
            let _ = writeln!(
                s,
                "phase name={} virtual_s={:.6} packets={}",
                p.name, p.virtual_s, p.packets_sent
            );
        }
        s
    }
}

/// Measures one phase of an attack program.
pub(crate) struct PhaseClock {
    name: &'static str,
    start: SimTime,
    sent: u64,
    host: HostId,
}

impl PhaseClock {
    pub fn start(sim: &Sim, host: HostId, name: &'static str) -> Self {
        PhaseClock {
            name,
            start: sim.now(),
            sent: sim.packets_sent(host),
            host,
        }
    }

    pub fn finish(self, sim: &Sim, report: &mut AttackReport) {
        report.phases.push(Phase {
            name: self.name.to_string(),
            virtual_s: (sim.now() - self.start).as_secs_f64(),
            packets_sent: sim.packets_sent(self.host) - self.sent,
        });
    }
}

/// Start time of the `i`-th packet of a paced stream.
pub(crate) fn paced(t0: SimTime, i: usize, rate_pps: f64) -> SimTime {
    t0.plus_secs_f64(i as f64 / rate_pps)
}

pub(crate) fn gateway_public(sim: &Sim) -> Addr {
    sim.gateway().public_addr()
}

/// Wire hop count from the attacker to the VPN server.
pub(crate) fn hops_to_gateway(sim: &Sim, attacker: HostId) -> u8 {
    sim.hops(attacker, sim.gateway_id())
        .expect("attacker has a route to the gateway")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_text_shape() {
        let mut r = AttackReport::new("infer_tcp");
        r.phases.push(Phase {
            name: "scan".into(),
            virtual_s: 3.5,
            packets_sent: 129_024,
        });
        r.success = true;
        r.recovered = Some(Recovered::Ports(vec![40000, 40001]));
        assert_eq!(
            r.to_text(),
            "report attack=infer_tcp success=true virtual_s=3.500000 packets=129024 ports=40000,40001\n\
             phase name=scan virtual_s=3.500000 packets=129024\n"
        );
    }
}

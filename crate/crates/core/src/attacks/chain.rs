use crate::netsim::{HostId, Sim};
use crate::types::Endpoint;

use super::{
    acquire_seq_ack, dns_inject, exhaust_ports, impersonate, infer_dns_port, infer_tcp_port, tcp_inject,
    AcquireOptions, AttackReport, DnsInjectOptions, ExhaustOptions, InferOptions, InjectOptions, Recovered,
};

#[derive(Debug, Clone, PartialEq)]
pub enum HijackMode {
    /// Plant data in the victim's stream.
    Inject { payload: Vec<u8>, opts: InjectOptions },
    /// Talk to the server as the victim.
    Impersonate { payload: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChainTarget {
    Dos(ExhaustOptions),
    TcpHijack {
        server: Endpoint,
        infer: InferOptions,
        acquire: AcquireOptions,
        mode: HijackMode,
    },
    DnsHijack {
        resolver: Endpoint,
        infer: InferOptions,
        inject: DnsInjectOptions,
    },
}

impl ChainTarget {
    pub fn label(&self) -> &'static str {
        match self {
            ChainTarget::Dos(_) => "dos",
            ChainTarget::TcpHijack { .. } => "tcp_hijack",
            ChainTarget::DnsHijack { .. } => "dns_hijack",
        }
    }
}

fn inferred_ports(r: &AttackReport) -> Vec<u16> {
    match &r.recovered {
        Some(Recovered::Ports(p)) => p.clone(),
        _ => Vec::new(),
    }
}

/// Run a complete attack, feeding each stage's findings to the next.
pub fn full_chain(sim: &mut Sim, attacker: HostId, target: &ChainTarget) -> AttackReport {
    let mut report = AttackReport::new(target.label());
    match target {
        ChainTarget::Dos(opts) => report.absorb(exhaust_ports(sim, attacker, opts)),
        ChainTarget::TcpHijack {
            server,
            infer,
            acquire,
            mode,
        } => {
            let found = infer_tcp_port(sim, attacker, *server, infer);
            let ports = inferred_ports(&found);
            report.absorb(found);
            if !report.success {
                return report;
            }
            for port in ports {
                let got = acquire_seq_ack(sim, attacker, port, *server, acquire);
                let seq_ack = got.recovered.clone();
                report.absorb(got);
                let Some(Recovered::SeqAck { seq, ack }) = seq_ack else {
                    continue;
                };
                let last = match mode {
                    HijackMode::Inject { payload, opts } => {
                        tcp_inject(sim, attacker, port, *server, seq, ack, payload, opts)
                    }
                    HijackMode::Impersonate { payload } => impersonate(sim, attacker, port, *server, seq, ack, payload),
                };
                report.absorb(last);
                if report.success {
                    break;
                }
            }
        }
        ChainTarget::DnsHijack {
            resolver,
            infer,
            inject,
        } => {
            let found = infer_dns_port(sim, attacker, *resolver, infer);
            let ports = inferred_ports(&found);
            report.absorb(found);
            if !report.success {
                return report;
            }
            report.absorb(dns_inject(sim, attacker, &ports, *resolver, inject));
        }
    }
    report
}

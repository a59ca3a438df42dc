use rand::seq::SliceRandom;

use crate::endpoints::DnsOutcome;
use crate::netsim::packet::{DnsMessage, Packet, UdpPayload};
use crate::netsim::{HostId, Path, Sim};
use crate::types::{Addr, Endpoint};

use super::{gateway_public, AttackReport, FailureReason, PhaseClock, Recovered};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxidOrder {
    Ascending,
    Shuffled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DnsInjectOptions {
    pub victim: HostId,
    pub qname: String,
    pub forged_answer: Addr,
    /// Responses per second, per targeted port.
    pub rate_pps: f64,
    pub order: TxidOrder,
    pub answer_ttl_s: u32,
    /// Granularity at which the victim's sockets are checked.
    pub chunk_s: f64,
}

impl DnsInjectOptions {
    pub fn new(victim: HostId, qname: &str, forged_answer: Addr) -> Self {
        DnsInjectOptions {
            victim,
            qname: qname.to_string(),
            forged_answer,
            rate_pps: 6000.0,
            order: TxidOrder::Ascending,
            answer_ttl_s: 86_400,
            chunk_s: 0.25,
        }
    }
}

/// Spray forged answers over the TxID space at each inferred port until the
/// victim's lookup settles one way or the other.
pub fn dns_inject(
    sim: &mut Sim,
    attacker: HostId,
    ports: &[u16],
    resolver: Endpoint,
    opts: &DnsInjectOptions,
) -> AttackReport {
    let mut report = AttackReport::new("dns_inject");
    let public = gateway_public(sim);
    let mut txids: Vec<u16> = (0..=u16::MAX).collect();
    if opts.order == TxidOrder::Shuffled {
        txids.shuffle(&mut sim.rng_mut().jitter);
    }
    let clock = PhaseClock::start(sim, attacker, "txid_sweep");
    let t0 = sim.now();
    let per_chunk = ((opts.rate_pps * opts.chunk_s).round() as usize).max(1);
    let mut next = 0;
    let mut chunk_start = t0;
    let settled = |sim: &Sim| {
        ports
            .iter()
            .all(|&p| sim.client(opts.victim).query(p).is_none_or(|q| q.outcome.is_some()))
    };
    while next < txids.len() && !settled(sim) {
        let end = (next + per_chunk).min(txids.len());
        for (k, &txid) in txids[next..end].iter().enumerate() {
            let at = chunk_start.plus_secs_f64(k as f64 / opts.rate_pps);
            for &p in ports {
                let msg = DnsMessage::response(txid, opts.qname.clone(), Some(opts.forged_answer), opts.answer_ttl_s);
                let pkt = Packet::udp(resolver, Endpoint::new(public, p), UdpPayload::Dns(msg));
                sim.emit_at(at, attacker, pkt, Path::Direct);
            }
        }
        next = end;
        chunk_start = chunk_start.plus_secs_f64(per_chunk as f64 / opts.rate_pps);
        sim.run_until(chunk_start);
    }
    // Let the tail of the sweep land.
    sim.run_for(0.2);
    clock.finish(sim, &mut report);

    let client = sim.client(opts.victim);
    let mut legit = false;
    for &p in ports {
        let Some(q) = client.query(p) else {
            continue;
        };
        match q.outcome {
            Some(DnsOutcome::Accepted { answer, .. }) if answer == Some(opts.forged_answer) => {
                report.success = true;
                report.recovered = Some(Recovered::Txid(q.txid));
                return report;
            }
            Some(DnsOutcome::Accepted { .. }) => legit = true,
            _ => {}
        }
    }
    report.fail(if legit {
        FailureReason::LegitResponseFirst
    } else {
        FailureReason::TimeoutExpired
    })
}

/// Probability that a sweep started `start_s` after the query, at `rate_pps`,
/// reaches the right TxID before the query times out.
pub fn race_success_probability(timeout_s: f64, start_s: f64, latency_s: f64, rate_pps: f64) -> f64 {
    let window = timeout_s - start_s - latency_s;
    if window <= 0.0 {
        return 0.0;
    }
    (window * rate_pps / 65_536.0).clamp(0.0, 1.0)
}

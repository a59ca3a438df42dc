use rand::Rng;

use crate::netsim::packet::{Packet, TcpFlags, TcpSegment, Transport};
use crate::netsim::{HostId, Ingress, Path, Sim};
use crate::types::Endpoint;

use super::{gateway_public, hops_to_gateway, paced, AttackReport, FailureReason, PhaseClock, Recovered};

/// Sequence spacing of the RST sweep; must stay under the smallest RST
/// acceptance window the attack is meant to beat.
pub const SWEEP_STRIDE: u32 = 60_000;

/// Sequence numbers covering the whole space at `stride` spacing.
pub fn rst_sweep_seqs(stride: u32) -> impl Iterator<Item = u32> {
    let n = (1u64 << 32).div_ceil(stride as u64);
    (0..n).map(move |i| (i * stride as u64) as u32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquireOptions {
    pub stride: u32,
    pub rate_pps: f64,
    /// Defaults to exactly the hop count to the gateway.
    pub rst_ttl: Option<u8>,
    /// Time for the gateway to drop the victim's entry after the sweep.
    pub evict_wait_s: f64,
    pub reply_wait_s: f64,
    pub max_attempts: u32,
    /// Uniform pause between attempts, in seconds.
    pub retry_jitter_s: (f64, f64),
}

impl Default for AcquireOptions {
    fn default() -> Self {
        AcquireOptions {
            stride: SWEEP_STRIDE,
            rate_pps: 120_000.0,
            rst_ttl: None,
            evict_wait_s: 10.5,
            reply_wait_s: 0.5,
            max_attempts: 5,
            retry_jitter_s: (0.0, 2.0),
        }
    }
}

/// Evict the victim's entry toward `server` with a RST sweep, take its
/// public port over and read the server's current SEQ and ACK.
pub fn acquire_seq_ack(
    sim: &mut Sim,
    attacker: HostId,
    port: u16,
    server: Endpoint,
    opts: &AcquireOptions,
) -> AttackReport {
    let mut report = AttackReport::new("seq_ack");
    let internal = sim.attacker(attacker).internal;
    let victim_public = Endpoint::new(gateway_public(sim), port);
    let ttl = opts.rst_ttl.unwrap_or_else(|| hops_to_gateway(sim, attacker));
    let mut any_accepted = false;

    for attempt in 0..opts.max_attempts {
        if attempt > 0 {
            let (lo, hi) = opts.retry_jitter_s;
            let pause = if hi > lo {
                sim.rng_mut().jitter.gen_range(lo..hi)
            } else {
                lo
            };
            sim.run_for(pause);
        }

        let clock = PhaseClock::start(sim, attacker, "rst_sweep");
        // Close our own probe entry toward the server, if any, so the
        // takeover below is not routed through it. Our probes used seq 0.
        for seq in [0, 1] {
            let own = TcpSegment::new(TcpFlags::RST, seq, 0);
            let pkt = Packet::tcp(Endpoint::new(internal, port), server, own).with_ttl(1);
            sim.send(attacker, pkt, Path::Tunnel);
        }
        sim.run_for(opts.reply_wait_s);
        let accepted_before = sim.gateway().table().stats.rst_accepted;
        let t0 = sim.now();
        let mut n = 0;
        for seq in rst_sweep_seqs(opts.stride) {
            let rst = Packet::tcp(server, victim_public, TcpSegment::new(TcpFlags::RST, seq, 0)).with_ttl(ttl);
            sim.emit_at(paced(t0, n, opts.rate_pps), attacker, rst, Path::Direct);
            n += 1;
        }
        sim.run_until(paced(t0, n, opts.rate_pps));
        any_accepted |= sim.gateway().table().stats.rst_accepted > accepted_before;
        sim.run_for(opts.evict_wait_s);
        clock.finish(sim, &mut report);

        let clock = PhaseClock::start(sim, attacker, "take_over");
        sim.attacker_mut(attacker).inbox.clear();
        let probe = TcpSegment::new(TcpFlags::PSH_ACK, 1, 1).with_payload(vec![0]);
        sim.send(
            attacker,
            Packet::tcp(Endpoint::new(internal, port), server, probe),
            Path::Tunnel,
        );
        sim.run_for(opts.reply_wait_s);
        clock.finish(sim, &mut report);

        let reply = sim.attacker_mut(attacker).take_inbox().into_iter().find_map(|r| {
            if r.ingress != Ingress::Tunnel || r.pkt.src != server || r.pkt.dst.port != port {
                return None;
            }
            match r.pkt.body {
                Transport::Tcp(seg) => Some(seg),
                Transport::Udp(_) => None,
            }
        });
        if let Some(seg) = reply {
            if !seg.flags.rst() && seg.flags.ack() {
                report.success = true;
                report.recovered = Some(Recovered::SeqAck {
                    seq: seg.seq,
                    ack: seg.ack,
                });
                return report;
            }
        }
    }
    let reason = if any_accepted {
        FailureReason::EntryRefreshed
    } else {
        FailureReason::RstRejected
    };
    report.fail(reason)
}

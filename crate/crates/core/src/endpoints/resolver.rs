use std::collections::BTreeMap;

use crate::netsim::packet::{DnsMessage, Packet, Transport, UdpPayload};
use crate::netsim::{Ctx, Path};
use crate::types::{Addr, Endpoint, SimTime};

#[derive(Debug, Clone, PartialEq)]
pub struct ResolverBehavior {
    pub response_delay_s: f64,
    /// Silenced resolvers never answer.
    pub muted: bool,
    pub zone: BTreeMap<String, Addr>,
    pub answer_ttl_s: u32,
}

impl Default for ResolverBehavior {
    fn default() -> Self {
        ResolverBehavior {
            response_delay_s: 0.05,
            muted: false,
            zone: BTreeMap::new(),
            answer_ttl_s: 300,
        }
    }
}

#[derive(Debug)]
pub struct Resolver {
    addr: Addr,
    behavior: ResolverBehavior,
    pub queries_seen: u64,
}

impl Resolver {
    pub fn new(addr: Addr, behavior: ResolverBehavior) -> Self {
        Resolver {
            addr,
            behavior,
            queries_seen: 0,
        }
    }

    pub fn behavior_mut(&mut self) -> &mut ResolverBehavior {
        &mut self.behavior
    }

    pub fn on_packet(&mut self, pkt: Packet, ctx: &mut Ctx) {
        let Transport::Udp(UdpPayload::Dns(q)) = &pkt.body else {
            return;
        };
        if q.is_response || pkt.dst.port != 53 {
            return;
        }
        self.queries_seen += 1;
        if self.behavior.muted {
            return;
        }
        let answer = self.behavior.zone.get(&q.qname).copied();
        let resp = DnsMessage::response(q.txid, q.qname.clone(), answer, self.behavior.answer_ttl_s);
        let out = Packet::udp(Endpoint::new(self.addr, 53), pkt.src, UdpPayload::Dns(resp));
        ctx.send_after(
            SimTime::from_secs_f64(self.behavior.response_delay_s),
            out,
            Path::Direct,
        );
    }
}

//! Deterministic discrete-event network.
//!
//! Hosts exchange [`Packet`]s either through the VPN tunnel (client to
//! gateway and back) or over the wire (everything else, with arbitrary source
//! addresses allowed). Wire routes carry a hop count; a packet crosses a
//! route only if its TTL covers every hop.

pub mod packet;
pub mod trace;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;

use rand::Rng;

use crate::attacks::AttackerHost;
use crate::endpoints::{Client, ClientBehavior, Resolver, ResolverBehavior, Server, ServerBehavior};
use crate::gateway::{Gateway, GatewayConfig, GatewayError};
use crate::rng::SimRng;
use crate::types::{Addr, Endpoint, SimTime};

use packet::Packet;
pub use trace::{Trace, TraceSink};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HostId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Path {
    /// Inside the VPN tunnel. From a client this always reaches the gateway
    /// with the client's assigned address as source.
    Tunnel,
    /// On the wire. Any source address may be forged.
    Direct,
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Path::Tunnel => "tunnel",
            Path::Direct => "direct",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ingress {
    Tunnel,
    Wire,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Route {
    pub hops: u8,
    pub latency_s: f64,
}

impl Route {
    pub fn new(hops: u8, latency_s: f64) -> Self {
        assert!(hops >= 1, "route needs at least one hop");
        assert!(latency_s >= 0.0, "negative latency");
        Route { hops, latency_s }
    }
}

/// Default wire topology around the gateway.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Topology {
    pub tunnel_latency_s: f64,
    pub attacker_gateway: Route,
    pub gateway_server: Route,
    pub attacker_server: Route,
}

impl Default for Topology {
    fn default() -> Self {
        Topology {
            tunnel_latency_s: 0.02,
            attacker_gateway: Route::new(4, 0.02),
            gateway_server: Route::new(3, 0.03),
            attacker_server: Route::new(5, 0.04),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimerTag {
    Request { port: u16 },
    ConnectRetry { port: u16, attempt: u8 },
    DnsTimeout { port: u16 },
    DnsRetransmit { port: u16 },
    Refresh,
}

#[derive(Debug, Clone)]
enum Event {
    Deliver { to: HostId, pkt: Packet, ingress: Ingress },
    Emit { from: HostId, pkt: Packet, path: Path },
    Timer { host: HostId, tag: TimerTag },
}

#[derive(Debug)]
struct Scheduled {
    at: SimTime,
    seq: u64,
    ev: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Reversed so the max-heap pops the earliest (time, insertion) pair.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

#[derive(Debug, Clone)]
pub enum Action {
    Send { delay: SimTime, pkt: Packet, path: Path },
    Timer { after: SimTime, tag: TimerTag },
}

/// What a host handler sees of the simulation.
pub struct Ctx<'a> {
    pub now: SimTime,
    pub rng: &'a mut SimRng,
    pub trace: &'a mut Trace,
    pub host: &'a str,
    out: Vec<Action>,
}

impl Ctx<'_> {
    pub fn send(&mut self, pkt: Packet, path: Path) {
        self.out.push(Action::Send {
            delay: SimTime::ZERO,
            pkt,
            path,
        });
    }

    pub fn send_after(&mut self, delay: SimTime, pkt: Packet, path: Path) {
        self.out.push(Action::Send { delay, pkt, path });
    }

    pub fn timer(&mut self, after: SimTime, tag: TimerTag) {
        self.out.push(Action::Timer { after, tag });
    }

    pub fn record(&mut self, verb: &str, detail: impl FnOnce() -> String) {
        self.trace.record(self.now, self.host, verb, detail);
    }
}

#[derive(Debug)]
pub enum Host {
    Gateway(Box<Gateway>),
    Client(Client),
    Server(Server),
    Resolver(Resolver),
    Attacker(AttackerHost),
}

impl Host {
    fn on_packet(&mut self, pkt: Packet, ingress: Ingress, ctx: &mut Ctx) {
        match self {
            Host::Gateway(g) => match ingress {
                Ingress::Tunnel => g.outbound(pkt, ctx),
                Ingress::Wire => g.inbound(pkt, ctx),
            },
            Host::Client(c) => c.on_packet(pkt, ctx),
            Host::Server(s) => s.on_packet(pkt, ctx),
            Host::Resolver(r) => r.on_packet(pkt, ctx),
            Host::Attacker(a) => a.on_packet(pkt, ingress, ctx),
        }
    }

    fn on_timer(&mut self, tag: TimerTag, ctx: &mut Ctx) {
        match self {
            Host::Client(c) => c.on_timer(tag, ctx),
            Host::Attacker(a) => a.on_timer(tag, ctx),
            Host::Gateway(_) | Host::Server(_) | Host::Resolver(_) => {}
        }
    }
}

#[derive(Debug)]
struct Slot {
    name: String,
    host: Host,
    /// Address inside the tunnel, for attached clients.
    internal: Option<Addr>,
    sent: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("no route from {from} to {to}")]
    UnknownRoute { from: String, to: Addr },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("address {0} already in use")]
    AddrInUse(Addr),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimCounters {
    pub events: u64,
    pub delivered: u64,
    pub dropped: u64,
}

pub struct SimConfig {
    pub seed: u64,
    pub gateway: GatewayConfig,
    pub topology: Topology,
    /// Per-packet loss on wire routes.
    pub drop_probability: f64,
    pub trace: Trace,
}

impl SimConfig {
    pub fn new(seed: u64, gateway: GatewayConfig) -> Self {
        SimConfig {
            seed,
            gateway,
            topology: Topology::default(),
            drop_probability: 0.0,
            trace: Trace::off(),
        }
    }
}

pub struct Sim {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Scheduled>,
    slots: Vec<Slot>,
    by_public: HashMap<Addr, HostId>,
    by_internal: HashMap<Addr, HostId>,
    routes: HashMap<(HostId, HostId), Route>,
    gateway: HostId,
    topology: Topology,
    drop_probability: f64,
    pub rng: SimRng,
    trace: Trace,
    pub counters: SimCounters,
}

impl fmt::Debug for Sim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Sim")
            .field("now", &self.now)
            .field("hosts", &self.slots.len())
            .field("pending", &self.queue.len())
            .finish()
    }
}

pub const GATEWAY_NAME: &str = "vpn";

impl Sim {
    pub fn new(cfg: SimConfig) -> Self {
        let public = cfg.gateway.public_addr;
        let gw = Gateway::new(cfg.gateway);
        let mut sim = Sim {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            slots: vec![Slot {
                name: GATEWAY_NAME.to_string(),
                host: Host::Gateway(Box::new(gw)),
                internal: None,
                sent: 0,
            }],
            by_public: HashMap::new(),
            by_internal: HashMap::new(),
            routes: HashMap::new(),
            gateway: HostId(0),
            topology: cfg.topology,
            drop_probability: cfg.drop_probability,
            rng: SimRng::new(cfg.seed),
            trace: cfg.trace,
            counters: SimCounters::default(),
        };
        sim.by_public.insert(public, HostId(0));
        sim
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn rng_mut(&mut self) -> &mut SimRng {
        &mut self.rng
    }

    pub fn gateway_id(&self) -> HostId {
        self.gateway
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    fn push(&mut self, at: SimTime, ev: Event) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Scheduled { at, seq, ev });
    }

    fn add_slot(&mut self, name: &str, host: Host) -> HostId {
        let id = HostId(self.slots.len());
        self.slots.push(Slot {
            name: name.to_string(),
            host,
            internal: None,
            sent: 0,
        });
        id
    }

    fn claim_public(&mut self, addr: Addr, id: HostId) -> Result<(), SimError> {
        if self.by_public.contains_key(&addr) {
            return Err(SimError::AddrInUse(addr));
        }
        self.by_public.insert(addr, id);
        Ok(())
    }

    pub fn set_route(&mut self, a: HostId, b: HostId, route: Route) {
        self.routes.insert((a, b), route);
        self.routes.insert((b, a), route);
    }

    pub fn route(&self, a: HostId, b: HostId) -> Option<Route> {
        self.routes.get(&(a, b)).copied()
    }

    /// Hop count between two hosts on the wire, as a traceroute would report.
    pub fn hops(&self, a: HostId, b: HostId) -> Option<u8> {
        self.route(a, b).map(|r| r.hops)
    }

    /// Servers and resolvers sit behind the gateway; the attacker reaches
    /// them directly with one extra hop.
    fn wire_up_remote(&mut self, id: HostId) {
        let t = self.topology;
        self.set_route(self.gateway, id, t.gateway_server);
        for a in self.attacker_ids() {
            self.set_route(a, id, t.attacker_server);
        }
        for other in self.remote_ids() {
            if other != id {
                self.set_route(other, id, t.gateway_server);
            }
        }
    }

    fn remote_ids(&self) -> Vec<HostId> {
        (0..self.slots.len())
            .map(HostId)
            .filter(|&h| matches!(self.slots[h.0].host, Host::Server(_) | Host::Resolver(_)))
            .collect()
    }

    fn attacker_ids(&self) -> Vec<HostId> {
        (0..self.slots.len())
            .map(HostId)
            .filter(|&h| matches!(self.slots[h.0].host, Host::Attacker(_)))
            .collect()
    }

    pub fn add_server(&mut self, name: &str, addr: Addr, behavior: ServerBehavior) -> Result<HostId, SimError> {
        let id = HostId(self.slots.len());
        self.claim_public(addr, id)?;
        self.add_slot(name, Host::Server(Server::new(addr, behavior)));
        self.wire_up_remote(id);
        Ok(id)
    }

    pub fn add_resolver(&mut self, name: &str, addr: Addr, behavior: ResolverBehavior) -> Result<HostId, SimError> {
        let id = HostId(self.slots.len());
        self.claim_public(addr, id)?;
        self.add_slot(name, Host::Resolver(Resolver::new(addr, behavior)));
        self.wire_up_remote(id);
        Ok(id)
    }

    fn attach(&mut self, id: HostId) -> Result<Addr, SimError> {
        let addr = self.gateway_mut().attach_client()?;
        self.slots[id.0].internal = Some(addr);
        self.by_internal.insert(addr, id);
        Ok(addr)
    }

    pub fn add_client(&mut self, name: &str, behavior: ClientBehavior) -> Result<HostId, SimError> {
        let id = self.add_slot(name, Host::Client(Client::new(behavior)));
        let addr = self.attach(id)?;
        let Host::Client(c) = &mut self.slots[id.0].host else {
            unreachable!()
        };
        c.set_addr(addr);
        Ok(id)
    }

    /// An attacker is a VPN client that also owns a plain internet address.
    pub fn add_attacker(&mut self, name: &str, public: Addr) -> Result<HostId, SimError> {
        let id = HostId(self.slots.len());
        self.claim_public(public, id)?;
        self.add_slot(name, Host::Attacker(AttackerHost::new(public)));
        let internal = self.attach(id)?;
        if let Host::Attacker(a) = &mut self.slots[id.0].host {
            a.internal = internal;
        }
        let t = self.topology;
        self.set_route(id, self.gateway, t.attacker_gateway);
        for r in self.remote_ids() {
            self.set_route(id, r, t.attacker_server);
        }
        Ok(id)
    }

    pub fn host(&self, id: HostId) -> &Host {
        &self.slots[id.0].host
    }

    pub fn host_mut(&mut self, id: HostId) -> &mut Host {
        &mut self.slots[id.0].host
    }

    pub fn host_name(&self, id: HostId) -> &str {
        &self.slots[id.0].name
    }

    pub fn host_by_name(&self, name: &str) -> Option<HostId> {
        self.slots.iter().position(|s| s.name == name).map(HostId)
    }

    pub fn internal_addr(&self, id: HostId) -> Option<Addr> {
        self.slots[id.0].internal
    }

    /// Packets a host has handed to the network so far.
    pub fn packets_sent(&self, id: HostId) -> u64 {
        self.slots[id.0].sent
    }

    pub fn gateway(&self) -> &Gateway {
        match &self.slots[self.gateway.0].host {
            Host::Gateway(g) => g,
            _ => unreachable!(),
        }
    }

    pub fn gateway_mut(&mut self) -> &mut Gateway {
        match &mut self.slots[self.gateway.0].host {
            Host::Gateway(g) => g,
            _ => unreachable!(),
        }
    }

    pub fn client(&self, id: HostId) -> &Client {
        match &self.slots[id.0].host {
            Host::Client(c) => c,
            other => panic!("host {} is not a client: {other:?}", id.0),
        }
    }

    pub fn client_mut(&mut self, id: HostId) -> &mut Client {
        match &mut self.slots[id.0].host {
            Host::Client(c) => c,
            _ => panic!("host {} is not a client", id.0),
        }
    }

    pub fn server(&self, id: HostId) -> &Server {
        match &self.slots[id.0].host {
            Host::Server(s) => s,
            _ => panic!("host {} is not a server", id.0),
        }
    }

    pub fn resolver_mut(&mut self, id: HostId) -> &mut Resolver {
        match &mut self.slots[id.0].host {
            Host::Resolver(r) => r,
            _ => panic!("host {} is not a resolver", id.0),
        }
    }

    pub fn attacker(&self, id: HostId) -> &AttackerHost {
        match &self.slots[id.0].host {
            Host::Attacker(a) => a,
            _ => panic!("host {} is not an attacker", id.0),
        }
    }

    pub fn attacker_mut(&mut self, id: HostId) -> &mut AttackerHost {
        match &mut self.slots[id.0].host {
            Host::Attacker(a) => a,
            _ => panic!("host {} is not an attacker", id.0),
        }
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn trace_mut(&mut self) -> &mut Trace {
        &mut self.trace
    }

    /// Hand a packet to the network at `at` (not earlier than now).
    pub fn emit_at(&mut self, at: SimTime, from: HostId, pkt: Packet, path: Path) {
        assert!(at >= self.now, "emit in the past");
        if at == self.now {
            self.transmit(from, pkt, path);
        } else {
            self.push(at, Event::Emit { from, pkt, path });
        }
    }

    pub fn send(&mut self, from: HostId, pkt: Packet, path: Path) {
        self.transmit(from, pkt, path);
    }

    pub fn schedule_timer(&mut self, at: SimTime, host: HostId, tag: TimerTag) {
        assert!(at >= self.now, "timer in the past");
        self.push(at, Event::Timer { host, tag });
    }

    /// Run a closure against a host as if one of its timers fired now, and
    /// apply whatever it sends.
    pub fn with_host<T>(&mut self, id: HostId, f: impl FnOnce(&mut Host, &mut Ctx) -> T) -> T {
        let slot = &mut self.slots[id.0];
        let mut ctx = Ctx {
            now: self.now,
            rng: &mut self.rng,
            trace: &mut self.trace,
            host: &slot.name,
            out: Vec::new(),
        };
        let r = f(&mut slot.host, &mut ctx);
        let out = ctx.out;
        self.apply(id, out);
        r
    }

    fn with_client<T>(&mut self, id: HostId, f: impl FnOnce(&mut Client, &mut Ctx) -> T) -> T {
        self.with_host(id, |h, ctx| match h {
            Host::Client(c) => f(c, ctx),
            _ => panic!("host {} is not a client", id.0),
        })
    }

    /// Have a client open a TCP session now. Returns the local port.
    pub fn client_connect(&mut self, id: HostId, remote: Endpoint, local_port: Option<u16>) -> u16 {
        self.with_client(id, |c, ctx| c.connect(remote, local_port, ctx))
    }

    pub fn client_request(&mut self, id: HostId, port: u16) -> bool {
        self.with_client(id, |c, ctx| c.request(port, ctx))
    }

    /// Have a client start a DNS lookup now. Returns the source port used.
    pub fn client_dns_query(&mut self, id: HostId, qname: &str) -> u16 {
        self.with_client(id, |c, ctx| c.dns_query(qname, ctx))
    }

    fn drop_packet(&mut self, from: HostId, pkt: &Packet, reason: &str) {
        self.counters.dropped += 1;
        let name = &self.slots[from.0].name;
        self.trace
            .record(self.now, name, "drop", || format!("reason={reason} pkt=[{pkt}]"));
    }

    fn transmit(&mut self, from: HostId, mut pkt: Packet, path: Path) {
        self.slots[from.0].sent += 1;
        {
            let name = &self.slots[from.0].name;
            self.trace
                .record(self.now, name, "send", || format!("path={path} pkt=[{pkt}]"));
        }
        match path {
            Path::Tunnel if from == self.gateway => {
                let Some(&to) = self.by_internal.get(&pkt.dst.addr) else {
                    return self.drop_packet(from, &pkt, "no_route");
                };
                if pkt.ttl < 1 {
                    return self.drop_packet(from, &pkt, "ttl");
                }
                pkt.ttl -= 1;
                pkt.via_tunnel = true;
                let at = self.now.plus_secs_f64(self.topology.tunnel_latency_s);
                self.push(
                    at,
                    Event::Deliver {
                        to,
                        pkt,
                        ingress: Ingress::Tunnel,
                    },
                );
            }
            Path::Tunnel => {
                let Some(addr) = self.slots[from.0].internal else {
                    return self.drop_packet(from, &pkt, "not_attached");
                };
                pkt.src.addr = addr;
                pkt.via_tunnel = true;
                let at = self.now.plus_secs_f64(self.topology.tunnel_latency_s);
                let to = self.gateway;
                self.push(
                    at,
                    Event::Deliver {
                        to,
                        pkt,
                        ingress: Ingress::Tunnel,
                    },
                );
            }
            Path::Direct => {
                pkt.via_tunnel = false;
                let Some(&to) = self.by_public.get(&pkt.dst.addr) else {
                    return self.drop_packet(from, &pkt, "no_route");
                };
                let Some(route) = self.routes.get(&(from, to)).copied() else {
                    return self.drop_packet(from, &pkt, "no_route");
                };
                if pkt.ttl < route.hops {
                    return self.drop_packet(from, &pkt, "ttl");
                }
                if self.drop_probability > 0.0 && self.rng.loss.gen::<f64>() < self.drop_probability {
                    return self.drop_packet(from, &pkt, "loss");
                }
                pkt.ttl -= route.hops;
                let at = self.now.plus_secs_f64(route.latency_s);
                self.push(
                    at,
                    Event::Deliver {
                        to,
                        pkt,
                        ingress: Ingress::Wire,
                    },
                );
            }
        }
    }

    fn apply(&mut self, from: HostId, out: Vec<Action>) {
        for a in out {
            match a {
                Action::Send { delay, pkt, path } => {
                    if delay == SimTime::ZERO {
                        self.transmit(from, pkt, path);
                    } else {
                        let at = self.now + delay;
                        self.push(at, Event::Emit { from, pkt, path });
                    }
                }
                Action::Timer { after, tag } => {
                    let at = self.now + after;
                    self.push(at, Event::Timer { host: from, tag });
                }
            }
        }
    }

    fn sweep(&mut self) {
        let now = self.now;
        let Host::Gateway(g) = &mut self.slots[self.gateway.0].host else {
            unreachable!()
        };
        g.expire(now, &mut self.trace);
    }

    fn dispatch(&mut self, ev: Event) {
        match ev {
            Event::Emit { from, pkt, path } => self.transmit(from, pkt, path),
            Event::Deliver { to, pkt, ingress } => {
                self.counters.delivered += 1;
                let slot = &mut self.slots[to.0];
                self.trace
                    .record(self.now, &slot.name, "deliver", || format!("pkt=[{pkt}]"));
                let mut ctx = Ctx {
                    now: self.now,
                    rng: &mut self.rng,
                    trace: &mut self.trace,
                    host: &slot.name,
                    out: Vec::new(),
                };
                slot.host.on_packet(pkt, ingress, &mut ctx);
                let out = ctx.out;
                self.apply(to, out);
            }
            Event::Timer { host, tag } => {
                let slot = &mut self.slots[host.0];
                let mut ctx = Ctx {
                    now: self.now,
                    rng: &mut self.rng,
                    trace: &mut self.trace,
                    host: &slot.name,
                    out: Vec::new(),
                };
                slot.host.on_timer(tag, &mut ctx);
                let out = ctx.out;
                self.apply(host, out);
            }
        }
    }

    /// Execute every event due at or before `t_end`, then park the clock there.
    pub fn run_until(&mut self, t_end: SimTime) -> u64 {
        assert!(t_end >= self.now, "run_until into the past");
        let mut n = 0;
        while self.queue.peek().is_some_and(|s| s.at <= t_end) {
            let s = self.queue.pop().expect("peeked");
            if s.at > self.now {
                self.now = s.at;
                self.sweep();
            }
            self.dispatch(s.ev);
            n += 1;
        }
        self.now = t_end;
        self.sweep();
        self.counters.events += n;
        n
    }

    pub fn run_for(&mut self, secs: f64) -> u64 {
        let t = self.now.plus_secs_f64(secs);
        self.run_until(t)
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conntrack::FrameworkProfile;
    use crate::netsim::packet::{TcpFlags, TcpSegment};
    use crate::types::Endpoint;

    fn sim(trace: Trace) -> Sim {
        let mut cfg = SimConfig::new(
            1,
            GatewayConfig::new(FrameworkProfile::builtin("netfilter_pre").unwrap()),
        );
        cfg.trace = trace;
        Sim::new(cfg)
    }

    #[test]
    fn empty_run_advances_clock() {
        let mut s = sim(Trace::off());
        assert_eq!(s.run_until(SimTime::from_secs(100)), 0);
        assert_eq!(s.now(), SimTime::from_secs(100));
    }

    #[test]
    fn direct_ttl_accounting() {
        let mut s = sim(Trace::memory());
        let srv_addr = Addr::new(203, 0, 113, 10);
        let srv = s.add_server("server", srv_addr, ServerBehavior::default()).unwrap();
        let a = s.add_attacker("attacker", Addr::new(192, 0, 2, 66)).unwrap();
        assert_eq!(s.hops(a, srv), Some(5));
        // A RST to a closed port comes back, proving delivery; check the TTL on arrival.
        let pkt = Packet::tcp(
            Endpoint::new(Addr::new(192, 0, 2, 66), 1000),
            Endpoint::new(srv_addr, 80),
            TcpSegment::new(TcpFlags::ACK, 1, 1),
        );
        s.send(a, pkt, Path::Direct);
        s.run_until(SimTime::from_secs(1));
        let deliver = s
            .trace()
            .lines()
            .iter()
            .find(|l| l.contains("host=server verb=deliver"))
            .unwrap();
        assert!(deliver.contains("ttl=59"), "{deliver}");
    }

    #[test]
    fn low_ttl_dies_on_route() {
        let mut s = sim(Trace::memory());
        let srv_addr = Addr::new(203, 0, 113, 10);
        s.add_server("server", srv_addr, ServerBehavior::default()).unwrap();
        let a = s.add_attacker("attacker", Addr::new(192, 0, 2, 66)).unwrap();
        let pkt = Packet::tcp(
            Endpoint::new(Addr::UNSPECIFIED, 1000),
            Endpoint::new(srv_addr, 80),
            TcpSegment::new(TcpFlags::SYN, 1, 0),
        )
        .with_ttl(2);
        s.send(a, pkt, Path::Tunnel);
        s.run_until(SimTime::from_secs(1));
        let lines = s.trace().lines();
        assert!(lines.iter().any(|l| l.contains("host=vpn verb=drop reason=ttl")));
        assert!(!lines.iter().any(|l| l.contains("host=server")));
        assert_eq!(s.gateway().table().len(), 1);
    }

    #[test]
    fn same_time_events_keep_insertion_order() {
        let mut s = sim(Trace::memory());
        let a = s.add_attacker("attacker", Addr::new(192, 0, 2, 66)).unwrap();
        let t = SimTime::from_secs(1);
        for port in [7u16, 3, 5] {
            let p = Packet::tcp(
                Endpoint::new(Addr::new(192, 0, 2, 66), port),
                Endpoint::new(Addr::new(192, 0, 2, 200), 80),
                TcpSegment::new(TcpFlags::SYN, 0, 0),
            );
            s.emit_at(t, a, p, Path::Direct);
        }
        s.run_until(t);
        let order: Vec<_> = s
            .trace()
            .lines()
            .iter()
            .filter(|l| l.contains("verb=send"))
            .map(|l| l.split(':').nth(1).unwrap().split('>').next().unwrap().to_string())
            .collect();
        assert_eq!(order, ["7", "3", "5"]);
    }
}

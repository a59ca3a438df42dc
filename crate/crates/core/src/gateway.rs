//! The VPN server: tunnel endpoint, NAT and stateful firewall.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::conntrack::{
    Allocation, ConnTable, CreateError, Direction, EntryId, EntryState, FrameworkProfile, LooseError, RstAction,
    SessionKey, TcpConnState,
};
use crate::netsim::packet::{Packet, Transport};
use crate::netsim::{Ctx, Path, Trace};
use crate::types::{Addr, Endpoint, Protocol, SimTime};

pub const DEFAULT_PUBLIC_ADDR: Addr = Addr::new(198, 51, 100, 1);
pub const DEFAULT_SUBNET: Addr = Addr::new(10, 8, 0, 0);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatewayConfig {
    pub public_addr: Addr,
    pub subnet_base: Addr,
    pub subnet_size: u32,
    pub profile: FrameworkProfile,
    pub client_isolation: bool,
    /// Every UDP/53 query is answered by this resolver instead.
    pub dns_redirect: Option<Endpoint>,
    /// TCP destination ports carried by gateway-owned proxy connections.
    pub proxy_ports: BTreeSet<u16>,
    /// Concurrent proxy connections allowed per client.
    pub proxy_conn_limit: usize,
}

impl GatewayConfig {
    pub fn new(profile: FrameworkProfile) -> Self {
        GatewayConfig {
            public_addr: DEFAULT_PUBLIC_ADDR,
            subnet_base: DEFAULT_SUBNET,
            subnet_size: 256,
            profile,
            client_isolation: true,
            dns_redirect: None,
            proxy_ports: BTreeSet::new(),
            proxy_conn_limit: 256,
        }
    }

    pub fn in_subnet(&self, a: Addr) -> bool {
        a.0 >= self.subnet_base.0 && a.0 - self.subnet_base.0 < self.subnet_size
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        self.profile
            .validate()
            .map_err(|e| GatewayError::Invalid(e.to_string()))?;
        if self.in_subnet(self.public_addr) {
            return Err(GatewayError::Invalid(format!(
                "public address {} lies inside the tunnel subnet",
                self.public_addr
            )));
        }
        if self.subnet_size < 4 {
            return Err(GatewayError::Invalid("tunnel subnet too small".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("tunnel subnet exhausted")]
    SubnetFull,
    #[error("invalid gateway config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GatewayStats {
    pub forwarded_out: u64,
    pub forwarded_in: u64,
    pub bypassed: u64,
    pub drops: BTreeMap<&'static str, u64>,
}

impl GatewayStats {
    pub fn dropped(&self, reason: &str) -> u64 {
        self.drops.get(reason).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy)]
struct ProxyLink {
    client: Endpoint,
    /// The destination as the client addressed it.
    shown_remote: Endpoint,
}

enum Opened {
    Entry(EntryId),
    Bypass,
    Drop(&'static str),
}

#[derive(Debug)]
pub struct Gateway {
    cfg: GatewayConfig,
    proxy_profile: FrameworkProfile,
    table: ConnTable,
    next_host: u32,
    clients: BTreeSet<Addr>,
    proxy_flows: HashMap<(Protocol, Endpoint, Endpoint), EntryId>,
    proxy_back: HashMap<EntryId, ProxyLink>,
    proxy_counts: HashMap<Addr, usize>,
    pub stats: GatewayStats,
}

fn create_drop_reason(e: CreateError) -> &'static str {
    match e {
        CreateError::TableFull => "table_full",
        CreateError::ConnLimit => "conn_limit",
        CreateError::Duplicate => "duplicate",
    }
}

impl Gateway {
    pub fn new(cfg: GatewayConfig) -> Self {
        let mut proxy_profile = FrameworkProfile::proxy();
        proxy_profile.timeouts = cfg.profile.timeouts;
        Gateway {
            table: ConnTable::new(cfg.public_addr),
            proxy_profile,
            cfg,
            next_host: 2,
            clients: BTreeSet::new(),
            proxy_flows: HashMap::new(),
            proxy_back: HashMap::new(),
            proxy_counts: HashMap::new(),
            stats: GatewayStats::default(),
        }
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.cfg
    }

    pub fn profile(&self) -> &FrameworkProfile {
        &self.cfg.profile
    }

    pub fn table(&self) -> &ConnTable {
        &self.table
    }

    pub fn public_addr(&self) -> Addr {
        self.cfg.public_addr
    }

    pub fn clients(&self) -> impl Iterator<Item = Addr> + '_ {
        self.clients.iter().copied()
    }

    /// Hand out the next tunnel address (.2, .3, ...).
    pub fn attach_client(&mut self) -> Result<Addr, GatewayError> {
        if self.next_host >= self.cfg.subnet_size - 1 {
            return Err(GatewayError::SubnetFull);
        }
        let a = Addr(self.cfg.subnet_base.0 + self.next_host);
        self.next_host += 1;
        self.clients.insert(a);
        Ok(a)
    }

    fn drop(&mut self, pkt: &Packet, reason: &'static str, ctx: &mut Ctx) {
        *self.stats.drops.entry(reason).or_insert(0) += 1;
        ctx.record("drop", || format!("reason={reason} pkt=[{pkt}]"));
    }

    fn is_proxied(&self, pkt: &Packet) -> bool {
        match pkt.proto() {
            Protocol::Tcp => self.cfg.proxy_ports.contains(&pkt.dst.port),
            Protocol::Udp => self.cfg.dns_redirect.is_some() && pkt.dst.port == 53,
        }
    }

    /// A packet arriving from a client through the tunnel.
    pub fn outbound(&mut self, mut pkt: Packet, ctx: &mut Ctx) {
        if self.cfg.in_subnet(pkt.dst.addr) {
            if self.cfg.client_isolation || !self.clients.contains(&pkt.dst.addr) {
                return self.drop(&pkt, "isolation", ctx);
            }
            return ctx.send(pkt, Path::Tunnel);
        }
        if self.is_proxied(&pkt) {
            return self.proxy_outbound(pkt, ctx);
        }
        let now = ctx.now;
        let id = match self.table.lookup(&pkt, Direction::Outbound, now) {
            Some(id) => {
                if !self.track(id, &pkt, Direction::Outbound, ctx) {
                    return self.drop(&pkt, "invalid_rst", ctx);
                }
                id
            }
            None => match self.open(&pkt, ctx) {
                Opened::Entry(id) => id,
                Opened::Bypass => {
                    self.stats.bypassed += 1;
                    ctx.record("bypass_nat", || format!("pkt=[{pkt}]"));
                    return ctx.send(pkt, Path::Direct);
                }
                Opened::Drop(reason) => return self.drop(&pkt, reason, ctx),
            },
        };
        pkt.src = self.table.get(id).expect("live entry").key.translated;
        self.stats.forwarded_out += 1;
        ctx.send(pkt, Path::Direct);
    }

    /// A packet arriving on the public interface.
    pub fn inbound(&mut self, mut pkt: Packet, ctx: &mut Ctx) {
        if pkt.dst.addr != self.cfg.public_addr {
            return self.drop(&pkt, "not_public", ctx);
        }
        let Some(id) = self.table.lookup(&pkt, Direction::Inbound, ctx.now) else {
            return self.drop(&pkt, "no_entry", ctx);
        };
        if !self.track(id, &pkt, Direction::Inbound, ctx) {
            return self.drop(&pkt, "invalid_rst", ctx);
        }
        let e = self.table.get(id).expect("live entry");
        if e.proxied {
            let Some(link) = self.proxy_back.get(&id) else {
                return self.drop(&pkt, "no_entry", ctx);
            };
            pkt.src = link.shown_remote;
            pkt.dst = link.client;
        } else {
            pkt.dst = e.key.internal;
        }
        self.stats.forwarded_in += 1;
        ctx.send(pkt, Path::Tunnel);
    }

    /// Run the state machine for a matched packet. False means the packet is
    /// an RST the profile refuses.
    fn track(&mut self, id: EntryId, pkt: &Packet, dir: Direction, ctx: &mut Ctx) -> bool {
        let before = self.table.get(id).map(|e| (e.state, e.expiry)).expect("live entry");
        let profile = if self.table.get(id).is_some_and(|e| e.proxied) {
            &self.proxy_profile
        } else {
            &self.cfg.profile
        };
        let accepted = match &pkt.body {
            Transport::Tcp(seg) if seg.flags.rst() => {
                self.table.handle_rst(id, pkt, dir, profile, ctx.now).action != RstAction::Ignored
            }
            _ => {
                self.table.handle_segment(id, pkt, dir, profile, ctx.now);
                true
            }
        };
        let e = self.table.get(id).expect("live entry");
        if (e.state, e.expiry) != before {
            ctx.record("state", || {
                format!(
                    "entry=[{}] old_state={} new_state={} old_expiry={} new_expiry={}",
                    e.key, before.0, e.state, before.1, e.expiry
                )
            });
        }
        accepted
    }

    fn open(&mut self, pkt: &Packet, ctx: &mut Ctx) -> Opened {
        let now = ctx.now;
        let profile = &self.cfg.profile;
        let initial = match &pkt.body {
            Transport::Udp(_) => EntryState::Udp,
            Transport::Tcp(seg) if seg.flags.is_syn_only() => EntryState::Tcp(TcpConnState::SynSent),
            Transport::Tcp(seg) if seg.flags.syn() || seg.flags.rst() => return Opened::Drop("no_entry"),
            Transport::Tcp(_) => {
                return match self.table.loose_instantiate(pkt, profile, now, &mut ctx.rng.port_alloc) {
                    Ok(id) => {
                        let e = self.table.get(id).expect("created");
                        ctx.record("create", || format!("loose=true entry=[{e}]"));
                        Opened::Entry(id)
                    }
                    Err(LooseError::Refused) => Opened::Drop("no_entry"),
                    Err(LooseError::Exhausted) => Opened::Drop("exhausted"),
                    Err(LooseError::BypassNat) => Opened::Bypass,
                    Err(LooseError::Create(e)) => Opened::Drop(create_drop_reason(e)),
                };
            }
        };
        let port = match self
            .table
            .allocate_port(pkt.proto(), pkt.src, pkt.dst, profile, &mut ctx.rng.port_alloc)
        {
            Allocation::Port(p) => p,
            Allocation::Exhausted => return Opened::Drop("exhausted"),
            Allocation::BypassNat => return Opened::Bypass,
        };
        let key = SessionKey {
            proto: pkt.proto(),
            internal: pkt.src,
            translated: Endpoint::new(self.cfg.public_addr, port),
            remote: pkt.dst,
        };
        match self.table.create_entry(key, initial, now, profile) {
            Ok(id) => {
                let e = self.table.get(id).expect("created");
                ctx.record("create", || format!("entry=[{e}]"));
                Opened::Entry(id)
            }
            Err(e) => Opened::Drop(create_drop_reason(e)),
        }
    }

    fn proxy_outbound(&mut self, mut pkt: Packet, ctx: &mut Ctx) {
        let now = ctx.now;
        let proto = pkt.proto();
        let shown = pkt.dst;
        let flow = (proto, pkt.src, shown);
        let existing = self
            .proxy_flows
            .get(&flow)
            .copied()
            .filter(|id| self.table.get(*id).is_some_and(|e| e.is_live(now)));
        let id = match existing {
            Some(id) => {
                if !self.track(id, &pkt, Direction::Outbound, ctx) {
                    return self.drop(&pkt, "invalid_rst", ctx);
                }
                id
            }
            None => {
                let fresh = match &pkt.body {
                    Transport::Tcp(seg) => seg.flags.is_syn_only(),
                    Transport::Udp(_) => true,
                };
                if !fresh {
                    return self.drop(&pkt, "proxy_no_flow", ctx);
                }
                let count = self.proxy_counts.get(&pkt.src.addr).copied().unwrap_or(0);
                if count >= self.cfg.proxy_conn_limit {
                    return self.drop(&pkt, "proxy_limit", ctx);
                }
                let remote = match proto {
                    Protocol::Udp => self.cfg.dns_redirect.expect("redirect configured"),
                    Protocol::Tcp => shown,
                };
                let public = Endpoint::new(self.cfg.public_addr, 0);
                let port =
                    match self
                        .table
                        .allocate_port(proto, public, remote, &self.proxy_profile, &mut ctx.rng.port_alloc)
                    {
                        Allocation::Port(p) => p,
                        _ => return self.drop(&pkt, "exhausted", ctx),
                    };
                let translated = public.with_port(port);
                let key = SessionKey {
                    proto,
                    internal: translated,
                    translated,
                    remote,
                };
                let initial = match proto {
                    Protocol::Tcp => EntryState::Tcp(TcpConnState::SynSent),
                    Protocol::Udp => EntryState::Udp,
                };
                let id = match self.table.create_entry(key, initial, now, &self.proxy_profile) {
                    Ok(id) => id,
                    Err(e) => return self.drop(&pkt, create_drop_reason(e), ctx),
                };
                let e = self.table.get(id).expect("created");
                ctx.record("create", || format!("proxy=true entry=[{e}]"));
                self.proxy_flows.insert(flow, id);
                self.proxy_back.insert(
                    id,
                    ProxyLink {
                        client: pkt.src,
                        shown_remote: shown,
                    },
                );
                *self.proxy_counts.entry(pkt.src.addr).or_insert(0) += 1;
                id
            }
        };
        let e = self.table.get(id).expect("live entry");
        pkt.src = e.key.translated;
        pkt.dst = e.key.remote;
        self.stats.forwarded_out += 1;
        ctx.send(pkt, Path::Direct);
    }

    /// Drop every entry whose timeout has passed.
    pub fn expire(&mut self, now: SimTime, trace: &mut Trace) {
        for e in self.table.expire_sweep(now) {
            trace.record(now, crate::netsim::GATEWAY_NAME, "expire", || format!("entry=[{e}]"));
            if e.proxied {
                if let Some(link) = self.proxy_back.remove(&e.id) {
                    self.proxy_flows.remove(&(e.key.proto, link.client, link.shown_remote));
                    if let Some(c) = self.proxy_counts.get_mut(&link.client.addr) {
                        *c -= 1;
                        if *c == 0 {
                            self.proxy_counts.remove(&link.client.addr);
                        }
                    }
                }
            }
        }
    }
}

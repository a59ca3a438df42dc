use std::collections::BTreeMap;

use rand::Rng;

use crate::netsim::packet::{DnsMessage, Packet, TcpFlags, TcpSegment, Transport, UdpPayload};
use crate::netsim::{Ctx, Path, TimerTag};
use crate::types::{Addr, Endpoint, PortRange, SimTime};

pub const DEFAULT_RESOLVER: Endpoint = Endpoint::new(Addr::new(192, 0, 2, 53), 53);

#[derive(Debug, Clone, PartialEq)]
pub struct ClientBehavior {
    /// Gap between application requests on each open session; `None` is idle.
    pub request_interval_s: Option<f64>,
    pub request_len: usize,
    pub dns_query_timeout_s: f64,
    /// Resend an unanswered query this often (same TxID and port).
    pub dns_retransmit_s: Option<f64>,
    pub resolver: Endpoint,
    pub port_range: PortRange,
    pub connect_retries: u8,
}

impl Default for ClientBehavior {
    fn default() -> Self {
        ClientBehavior {
            request_interval_s: None,
            request_len: 16,
            dns_query_timeout_s: 10.0,
            dns_retransmit_s: None,
            resolver: DEFAULT_RESOLVER,
            port_range: PortRange::EPHEMERAL,
            connect_retries: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnState {
    Connecting,
    Established,
    Reset,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TcpConn {
    pub remote: Endpoint,
    pub state: ConnState,
    pub snd_una: u32,
    pub snd_nxt: u32,
    pub rcv_nxt: u32,
    pub attempts: u8,
    pub opened_at: SimTime,
    pub established_at: Option<SimTime>,
    pub requests_sent: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DnsOutcome {
    Accepted { at: SimTime, answer: Option<Addr> },
    Expired { at: SimTime },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnsQuery {
    pub txid: u16,
    pub qname: String,
    pub resolver: Endpoint,
    pub sent_at: SimTime,
    pub deadline: SimTime,
    pub outcome: Option<DnsOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DnsVerdict {
    Accepted,
    IgnoredTxid,
    Expired,
    /// No open socket on that port.
    NoQuery,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub at: SimTime,
    pub port: u16,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClientLog {
    pub accepted: Vec<Delivery>,
    pub resets: Vec<(SimTime, u16)>,
    pub challenge_acks: u64,
    pub dup_acks: u64,
}

/// Victim VPN client.
#[derive(Debug)]
pub struct Client {
    addr: Addr,
    behavior: ClientBehavior,
    conns: BTreeMap<u16, TcpConn>,
    queries: BTreeMap<u16, DnsQuery>,
    pub log: ClientLog,
}

fn ack_ok(ack: u32, una: u32, nxt: u32) -> bool {
    ack.wrapping_sub(una) <= nxt.wrapping_sub(una)
}

impl Client {
    pub fn new(behavior: ClientBehavior) -> Self {
        Client {
            addr: Addr::UNSPECIFIED,
            behavior,
            conns: BTreeMap::new(),
            queries: BTreeMap::new(),
            log: ClientLog::default(),
        }
    }

    pub(crate) fn set_addr(&mut self, a: Addr) {
        self.addr = a;
    }

    pub fn addr(&self) -> Addr {
        self.addr
    }

    pub fn behavior(&self) -> &ClientBehavior {
        &self.behavior
    }

    pub fn behavior_mut(&mut self) -> &mut ClientBehavior {
        &mut self.behavior
    }

    pub fn conn(&self, port: u16) -> Option<&TcpConn> {
        self.conns.get(&port)
    }

    pub fn conns(&self) -> impl Iterator<Item = (u16, &TcpConn)> {
        self.conns.iter().map(|(p, c)| (*p, c))
    }

    pub fn query(&self, port: u16) -> Option<&DnsQuery> {
        self.queries.get(&port)
    }

    pub fn queries(&self) -> impl Iterator<Item = (u16, &DnsQuery)> {
        self.queries.iter().map(|(p, q)| (*p, q))
    }

    fn port_busy(&self, p: u16) -> bool {
        self.conns.contains_key(&p) || self.queries.contains_key(&p)
    }

    fn fresh_port(&self, ctx: &mut Ctx) -> u16 {
        let r = self.behavior.port_range;
        loop {
            let p = ctx.rng.client_ports.gen_range(r.lo..=r.hi);
            if !self.port_busy(p) {
                return p;
            }
        }
    }

    fn me(&self, port: u16) -> Endpoint {
        Endpoint::new(self.addr, port)
    }

    fn tcp_to(&self, port: u16, remote: Endpoint, seg: TcpSegment) -> Packet {
        Packet::tcp(self.me(port), remote, seg)
    }

    fn send_syn(&self, port: u16, ctx: &mut Ctx) {
        let c = &self.conns[&port];
        let syn = TcpSegment::new(TcpFlags::SYN, c.snd_una, 0);
        ctx.send(self.tcp_to(port, c.remote, syn), Path::Tunnel);
    }

    /// Open a TCP session. Retransmits the SYN after 1, 3, 7, ... seconds.
    pub fn connect(&mut self, remote: Endpoint, local_port: Option<u16>, ctx: &mut Ctx) -> u16 {
        let port = local_port.unwrap_or_else(|| self.fresh_port(ctx));
        let iss: u32 = ctx.rng.isn.gen();
        self.conns.insert(
            port,
            TcpConn {
                remote,
                state: ConnState::Connecting,
                snd_una: iss,
                snd_nxt: iss.wrapping_add(1),
                rcv_nxt: 0,
                attempts: 1,
                opened_at: ctx.now,
                established_at: None,
                requests_sent: 0,
            },
        );
        self.send_syn(port, ctx);
        ctx.timer(SimTime::from_secs(1), TimerTag::ConnectRetry { port, attempt: 1 });
        port
    }

    /// Send one application request on an established session.
    pub fn request(&mut self, port: u16, ctx: &mut Ctx) -> bool {
        let len = self.behavior.request_len;
        let me = self.me(port);
        let Some(c) = self.conns.get_mut(&port) else {
            return false;
        };
        if c.state != ConnState::Established {
            return false;
        }
        c.requests_sent += 1;
        let mut payload = format!("REQ{}:", c.requests_sent).into_bytes();
        payload.resize(len.max(payload.len()), b'.');
        let seg = TcpSegment::new(TcpFlags::PSH_ACK, c.snd_nxt, c.rcv_nxt).with_payload(payload);
        c.snd_nxt = c.snd_nxt.wrapping_add(seg.payload_len());
        let remote = c.remote;
        ctx.send(Packet::tcp(me, remote, seg), Path::Tunnel);
        true
    }

    /// Issue a DNS lookup from a fresh port with a uniform TxID.
    pub fn dns_query(&mut self, qname: &str, ctx: &mut Ctx) -> u16 {
        let port = self.fresh_port(ctx);
        let txid: u16 = ctx.rng.txid.gen();
        let timeout = SimTime::from_secs_f64(self.behavior.dns_query_timeout_s);
        let resolver = self.behavior.resolver;
        self.queries.insert(
            port,
            DnsQuery {
                txid,
                qname: qname.to_string(),
                resolver,
                sent_at: ctx.now,
                deadline: ctx.now + timeout,
                outcome: None,
            },
        );
        self.send_query(port, ctx);
        ctx.timer(timeout, TimerTag::DnsTimeout { port });
        if let Some(r) = self.behavior.dns_retransmit_s {
            ctx.timer(SimTime::from_secs_f64(r), TimerTag::DnsRetransmit { port });
        }
        port
    }

    fn send_query(&self, port: u16, ctx: &mut Ctx) {
        let q = &self.queries[&port];
        let msg = DnsMessage::query(q.txid, q.qname.clone());
        ctx.send(
            Packet::udp(self.me(port), q.resolver, UdpPayload::Dns(msg)),
            Path::Tunnel,
        );
    }

    pub fn on_timer(&mut self, tag: TimerTag, ctx: &mut Ctx) {
        match tag {
            TimerTag::Request { port } => {
                if self.request(port, ctx) {
                    if let Some(i) = self.behavior.request_interval_s {
                        ctx.timer(SimTime::from_secs_f64(i), TimerTag::Request { port });
                    }
                }
            }
            TimerTag::ConnectRetry { port, attempt } => {
                let retries = self.behavior.connect_retries;
                let Some(c) = self.conns.get_mut(&port) else {
                    return;
                };
                if c.state != ConnState::Connecting {
                    return;
                }
                if attempt > retries {
                    c.state = ConnState::Failed;
                    ctx.record("connect_failed", || format!("port={port}"));
                    return;
                }
                c.attempts += 1;
                self.send_syn(port, ctx);
                ctx.timer(
                    SimTime::from_secs(1u64 << attempt),
                    TimerTag::ConnectRetry {
                        port,
                        attempt: attempt + 1,
                    },
                );
            }
            TimerTag::DnsTimeout { port } => {
                if let Some(q) = self.queries.get_mut(&port) {
                    if q.outcome.is_none() {
                        q.outcome = Some(DnsOutcome::Expired { at: ctx.now });
                        ctx.record("dns_expired", || format!("port={port}"));
                    }
                }
            }
            TimerTag::DnsRetransmit { port } => {
                let open = self
                    .queries
                    .get(&port)
                    .is_some_and(|q| q.outcome.is_none() && ctx.now < q.deadline);
                if open {
                    self.send_query(port, ctx);
                    if let Some(r) = self.behavior.dns_retransmit_s {
                        ctx.timer(SimTime::from_secs_f64(r), TimerTag::DnsRetransmit { port });
                    }
                }
            }
            TimerTag::Refresh => {}
        }
    }

    pub fn on_packet(&mut self, pkt: Packet, ctx: &mut Ctx) {
        match &pkt.body {
            Transport::Udp(UdpPayload::Dns(m)) if m.is_response => {
                let v = self.on_dns(pkt.src, pkt.dst.port, m, ctx.now);
                if v == DnsVerdict::Accepted {
                    let port = pkt.dst.port;
                    ctx.record("dns_accepted", || {
                        format!("port={port} txid={} answer={}", m.txid, m.answer.unwrap_or_default())
                    });
                }
            }
            Transport::Udp(_) => {}
            Transport::Tcp(_) => self.on_tcp(pkt, ctx),
        }
    }

    /// First matching response before the deadline wins.
    pub fn on_dns(&mut self, src: Endpoint, port: u16, m: &DnsMessage, now: SimTime) -> DnsVerdict {
        let Some(q) = self.queries.get_mut(&port) else {
            return DnsVerdict::NoQuery;
        };
        if matches!(q.outcome, Some(DnsOutcome::Expired { .. })) || now >= q.deadline {
            if q.outcome.is_none() {
                q.outcome = Some(DnsOutcome::Expired { at: now });
            }
            return DnsVerdict::Expired;
        }
        if q.outcome.is_some() {
            return DnsVerdict::NoQuery;
        }
        if src != q.resolver || m.txid != q.txid || m.qname != q.qname {
            return DnsVerdict::IgnoredTxid;
        }
        q.outcome = Some(DnsOutcome::Accepted {
            at: now,
            answer: m.answer,
        });
        DnsVerdict::Accepted
    }

    fn pure_ack(&self, port: u16, ctx: &mut Ctx) {
        let c = &self.conns[&port];
        let seg = TcpSegment::new(TcpFlags::ACK, c.snd_nxt, c.rcv_nxt);
        ctx.send(self.tcp_to(port, c.remote, seg), Path::Tunnel);
    }

    fn on_tcp(&mut self, pkt: Packet, ctx: &mut Ctx) {
        let seg = pkt.tcp_segment().expect("tcp");
        let port = pkt.dst.port;
        let known = self
            .conns
            .get(&port)
            .is_some_and(|c| c.remote == pkt.src && matches!(c.state, ConnState::Connecting | ConnState::Established));
        if !known {
            if !seg.flags.rst() {
                let rst = TcpSegment::new(TcpFlags::RST, seg.ack, 0);
                ctx.send(Packet::tcp(pkt.dst, pkt.src, rst), Path::Tunnel);
            }
            return;
        }
        let interval = self.behavior.request_interval_s;
        let c = self.conns.get_mut(&port).expect("known");
        match c.state {
            ConnState::Connecting => {
                if seg.flags.is_syn_ack() && seg.ack == c.snd_nxt {
                    c.rcv_nxt = seg.seq.wrapping_add(1);
                    c.snd_una = seg.ack;
                    c.state = ConnState::Established;
                    c.established_at = Some(ctx.now);
                    ctx.record("established", || format!("port={port}"));
                    self.pure_ack(port, ctx);
                    if let Some(i) = interval {
                        ctx.timer(SimTime::from_secs_f64(i), TimerTag::Request { port });
                    }
                } else if seg.flags.rst() && seg.flags.ack() && seg.ack == c.snd_nxt {
                    c.state = ConnState::Failed;
                }
            }
            ConnState::Established => {
                if seg.flags.rst() {
                    if seg.seq == c.rcv_nxt {
                        c.state = ConnState::Reset;
                        self.log.resets.push((ctx.now, port));
                        ctx.record("reset", || format!("port={port}"));
                    } else {
                        self.log.challenge_acks += 1;
                        self.pure_ack(port, ctx);
                    }
                } else if seg.flags.syn() {
                    self.log.challenge_acks += 1;
                    self.pure_ack(port, ctx);
                } else if !seg.payload.is_empty() {
                    if seg.seq == c.rcv_nxt && ack_ok(seg.ack, c.snd_una, c.snd_nxt) {
                        c.rcv_nxt = c.rcv_nxt.wrapping_add(seg.payload_len());
                        c.snd_una = seg.ack;
                        self.log.accepted.push(Delivery {
                            at: ctx.now,
                            port,
                            payload: seg.payload.clone(),
                        });
                        self.pure_ack(port, ctx);
                    } else {
                        self.log.dup_acks += 1;
                        self.pure_ack(port, ctx);
                    }
                } else if ack_ok(seg.ack, c.snd_una, c.snd_nxt) {
                    c.snd_una = seg.ack;
                }
            }
            ConnState::Reset | ConnState::Failed => {}
        }
    }
}

use std::collections::{BTreeSet, HashMap};

use rand::Rng;

use crate::netsim::packet::{Packet, TcpFlags, TcpSegment, Transport};
use crate::netsim::{Ctx, Path};
use crate::types::{Addr, Endpoint};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerBehavior {
    pub listen_ports: BTreeSet<u16>,
    /// Bytes sent back for each accepted request; 0 means acknowledge only.
    pub response_len: usize,
}

impl Default for ServerBehavior {
    fn default() -> Self {
        ServerBehavior {
            listen_ports: [21, 80, 443].into_iter().collect(),
            response_len: 32,
        }
    }
}

/// Per-connection counters. `snd_nxt` and `rcv_nxt` are the exact SEQ and
/// ACK values the server expects next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServerConn {
    pub iss: u32,
    pub snd_una: u32,
    pub snd_nxt: u32,
    pub rcv_nxt: u32,
    pub established: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ServerLog {
    pub syns: u64,
    pub requests: u64,
    pub echoed_acks: u64,
    pub rsts_sent: u64,
    pub resets: u64,
    pub packets: u64,
}

#[derive(Debug)]
pub struct Server {
    addr: Addr,
    behavior: ServerBehavior,
    conns: HashMap<(Endpoint, u16), ServerConn>,
    pub log: ServerLog,
}

impl Server {
    pub fn new(addr: Addr, behavior: ServerBehavior) -> Self {
        Server {
            addr,
            behavior,
            conns: HashMap::new(),
            log: ServerLog::default(),
        }
    }

    pub fn addr(&self) -> Addr {
        self.addr
    }

    /// Ground truth for a peer as seen on the server side.
    pub fn connection(&self, peer: Endpoint, local_port: u16) -> Option<&ServerConn> {
        self.conns.get(&(peer, local_port))
    }

    pub fn connection_count(&self) -> usize {
        self.conns.len()
    }

    fn reply(&self, pkt: &Packet, seg: TcpSegment, ctx: &mut Ctx) {
        ctx.send(Packet::tcp(pkt.dst, pkt.src, seg), Path::Direct);
    }

    pub fn on_packet(&mut self, pkt: Packet, ctx: &mut Ctx) {
        self.log.packets += 1;
        let Transport::Tcp(seg) = &pkt.body else {
            return;
        };
        let key = (pkt.src, pkt.dst.port);
        if !self.behavior.listen_ports.contains(&pkt.dst.port) {
            if !seg.flags.rst() {
                self.log.rsts_sent += 1;
                let rst = TcpSegment::new(TcpFlags::RST_ACK, 0, seg.seq.wrapping_add(1));
                self.reply(&pkt, rst, ctx);
            }
            return;
        }
        if seg.flags.is_syn_only() {
            self.log.syns += 1;
            let conn = match self.conns.get(&key) {
                Some(c) if !c.established => *c,
                Some(c) => {
                    // Established: answer with the current state only.
                    let ack = TcpSegment::new(TcpFlags::ACK, c.snd_nxt, c.rcv_nxt);
                    self.log.echoed_acks += 1;
                    return self.reply(&pkt, ack, ctx);
                }
                None => {
                    let iss: u32 = ctx.rng.isn.gen();
                    let c = ServerConn {
                        iss,
                        snd_una: iss,
                        snd_nxt: iss.wrapping_add(1),
                        rcv_nxt: seg.seq.wrapping_add(1),
                        established: false,
                    };
                    self.conns.insert(key, c);
                    c
                }
            };
            let sa = TcpSegment::new(TcpFlags::SYN_ACK, conn.iss, conn.rcv_nxt);
            return self.reply(&pkt, sa, ctx);
        }
        let Some(c) = self.conns.get_mut(&key) else {
            if !seg.flags.rst() {
                self.log.rsts_sent += 1;
                let rst = if seg.flags.ack() {
                    TcpSegment::new(TcpFlags::RST, seg.ack, 0)
                } else {
                    TcpSegment::new(TcpFlags::RST_ACK, 0, seg.seq.wrapping_add(seg.payload_len()))
                };
                self.reply(&pkt, rst, ctx);
            }
            return;
        };
        if seg.flags.rst() {
            if seg.seq == c.rcv_nxt {
                self.conns.remove(&key);
                self.log.resets += 1;
                ctx.record("reset", || format!("peer={}", pkt.src));
            } else {
                let ack = TcpSegment::new(TcpFlags::ACK, c.snd_nxt, c.rcv_nxt);
                self.log.echoed_acks += 1;
                self.reply(&pkt, ack, ctx);
            }
            return;
        }
        if !seg.flags.ack() {
            return;
        }
        let ack_ok = seg.ack.wrapping_sub(c.snd_una) <= c.snd_nxt.wrapping_sub(c.snd_una);
        if !c.established && ack_ok && seg.ack == c.snd_nxt {
            c.established = true;
        }
        if seg.payload.is_empty() {
            if ack_ok {
                c.snd_una = seg.ack;
            }
            return;
        }
        if c.established && seg.seq == c.rcv_nxt && ack_ok {
            self.log.requests += 1;
            c.snd_una = seg.ack;
            c.rcv_nxt = c.rcv_nxt.wrapping_add(seg.payload_len());
            let n = self.behavior.response_len;
            let seg = if n == 0 {
                TcpSegment::new(TcpFlags::ACK, c.snd_nxt, c.rcv_nxt)
            } else {
                let mut body = format!("RESP{}:", self.log.requests).into_bytes();
                body.resize(n.max(body.len()), b'#');
                TcpSegment::new(TcpFlags::PSH_ACK, c.snd_nxt, c.rcv_nxt).with_payload(body)
            };
            c.snd_nxt = c.snd_nxt.wrapping_add(seg.payload_len());
            self.reply(&pkt, seg, ctx);
        } else {
            // Out of sync: restate exactly where the connection stands.
            let ack = TcpSegment::new(TcpFlags::ACK, c.snd_nxt, c.rcv_nxt);
            self.log.echoed_acks += 1;
            self.reply(&pkt, ack, ctx);
        }
    }
}

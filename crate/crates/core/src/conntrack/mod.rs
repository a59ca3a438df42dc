//! Stateful connection tracking with NAT port allocation.

mod ports;
mod profile;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;

use rand::Rng;

use crate::netsim::packet::{Packet, Transport};
use crate::types::{Addr, Endpoint, Protocol, SimTime};

use ports::{pick_bounded, pick_uniform, PortSet};
pub use profile::{ExhaustionBehavior, Framework, FrameworkProfile, PortAllocation, ProfileError, RstPolicy, Timeouts};

pub type EntryId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TcpConnState {
    SynSent,
    Established,
    Close,
}

impl fmt::Display for TcpConnState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TcpConnState::SynSent => "SYN_SENT",
            TcpConnState::Established => "ESTABLISHED",
            TcpConnState::Close => "CLOSE",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntryState {
    Tcp(TcpConnState),
    Udp,
}

impl fmt::Display for EntryState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntryState::Tcp(s) => s.fmt(f),
            EntryState::Udp => f.write_str("UDP"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SessionKey {
    pub proto: Protocol,
    pub internal: Endpoint,
    pub translated: Endpoint,
    pub remote: Endpoint,
}

impl fmt::Display for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}<->{}]<->[{}]",
            self.proto, self.internal, self.translated, self.remote
        )
    }
}

/// Sequence bookkeeping used to validate RSTs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SeqTrack {
    /// Highest sequence (plus length) seen from the remote side.
    pub last_seq: u32,
    /// Latest acknowledgment sent by the internal side.
    pub last_ack: u32,
    /// Latest acknowledgment sent by the remote side.
    pub peer_ack: u32,
    pub window: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionEntry {
    pub id: EntryId,
    pub key: SessionKey,
    pub state: EntryState,
    pub created: SimTime,
    pub expiry: SimTime,
    pub seq: SeqTrack,
    pub challenge_armed: bool,
    pub syn_ack_seen: bool,
    pub reply_seen: bool,
    /// Created from a mid-stream packet.
    pub loose: bool,
    /// Owned by the gateway's proxy path rather than a client.
    pub proxied: bool,
}

impl SessionEntry {
    pub fn is_live(&self, now: SimTime) -> bool {
        self.expiry > now
    }

    pub fn tcp_state(&self) -> Option<TcpConnState> {
        match self.state {
            EntryState::Tcp(s) => Some(s),
            EntryState::Udp => None,
        }
    }
}

impl fmt::Display for SessionEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} state={} expiry={}", self.key, self.state, self.expiry)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Client to the world, through the tunnel.
    Outbound,
    /// World to the gateway's public address.
    Inbound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Allocation {
    Port(u16),
    Exhausted,
    BypassNat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum CreateError {
    #[error("connection table full")]
    TableFull,
    #[error("per-destination connection limit reached")]
    ConnLimit,
    #[error("translated tuple already live")]
    Duplicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum LooseError {
    #[error("loose instantiation disabled")]
    Refused,
    #[error("no free port")]
    Exhausted,
    #[error("no free port, forwarding untranslated")]
    BypassNat,
    #[error(transparent)]
    Create(#[from] CreateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideEffect {
    None,
    /// An in-window RST armed the entry; a pure ACK from the client restores it.
    ChallengeAckExpected,
    ChallengeAckRestored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionResult {
    pub new_state: EntryState,
    pub new_expiry: SimTime,
    pub forward: bool,
    pub side_effect: SideEffect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RstAction {
    Ignored,
    TimeoutReduced,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RstResult {
    pub action: RstAction,
    pub challenge_ack_armed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TableStats {
    pub created: u64,
    pub expired: u64,
    pub loose_created: u64,
    pub table_full: u64,
    pub conn_limited: u64,
    pub rst_accepted: u64,
    pub rst_ignored: u64,
}

/// Symmetric distance between two points of the 32-bit sequence circle.
pub fn seq_distance(a: u32, b: u32) -> u32 {
    let d = a.wrapping_sub(b);
    d.min(d.wrapping_neg())
}

#[derive(Debug, Clone)]
pub struct ConnTable {
    public_addr: Addr,
    entries: HashMap<EntryId, SessionEntry>,
    by_internal: HashMap<(Protocol, Endpoint, Endpoint), EntryId>,
    by_public: HashMap<(Protocol, u16, Endpoint), EntryId>,
    ports: HashMap<(Protocol, Endpoint), PortSet>,
    dest_counts: HashMap<(Addr, Addr), usize>,
    expiries: BinaryHeap<Reverse<(SimTime, EntryId)>>,
    next_id: EntryId,
    pub stats: TableStats,
}

impl ConnTable {
    pub fn new(public_addr: Addr) -> Self {
        ConnTable {
            public_addr,
            entries: HashMap::new(),
            by_internal: HashMap::new(),
            by_public: HashMap::new(),
            ports: HashMap::new(),
            dest_counts: HashMap::new(),
            expiries: BinaryHeap::new(),
            next_id: 1,
            stats: TableStats::default(),
        }
    }

    pub fn public_addr(&self) -> Addr {
        self.public_addr
    }

    /// Cross-check the indexes against the entries. Returns the first
    /// inconsistency found.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.by_internal.len() != self.entries.len() || self.by_public.len() != self.entries.len() {
            return Err(format!(
                "index sizes differ: entries={} internal={} public={}",
                self.entries.len(),
                self.by_internal.len(),
                self.by_public.len()
            ));
        }
        for (id, e) in &self.entries {
            let k = e.key;
            if k.translated.addr != self.public_addr {
                return Err(format!("entry {id} translated to {}", k.translated.addr));
            }
            if self.by_public.get(&(k.proto, k.translated.port, k.remote)) != Some(id) {
                return Err(format!("entry {id} missing from public index"));
            }
            if self.by_internal.get(&(k.proto, k.internal, k.remote)) != Some(id) {
                return Err(format!("entry {id} missing from internal index"));
            }
            if !self.port_in_use(k.proto, k.remote, k.translated.port) {
                return Err(format!("entry {id} port {} not marked used", k.translated.port));
            }
        }
        Ok(())
    }

    /// Entries currently stored, including expired ones not yet swept.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: EntryId) -> Option<&SessionEntry> {
        self.entries.get(&id)
    }

    /// All stored entries in creation order.
    pub fn entries(&self) -> Vec<&SessionEntry> {
        let mut v: Vec<_> = self.entries.values().collect();
        v.sort_by_key(|e| e.id);
        v
    }

    pub fn live_count(&self, now: SimTime) -> usize {
        self.entries.values().filter(|e| e.is_live(now)).count()
    }

    pub fn port_in_use(&self, proto: Protocol, remote: Endpoint, port: u16) -> bool {
        self.ports.get(&(proto, remote)).is_some_and(|s| s.contains(port))
    }

    pub fn find_internal(&self, proto: Protocol, internal: Endpoint, remote: Endpoint) -> Option<EntryId> {
        self.by_internal.get(&(proto, internal, remote)).copied()
    }

    pub fn find_public(&self, proto: Protocol, port: u16, remote: Endpoint) -> Option<EntryId> {
        self.by_public.get(&(proto, port, remote)).copied()
    }

    pub fn allocate_port<R: Rng>(
        &self,
        proto: Protocol,
        internal: Endpoint,
        remote: Endpoint,
        profile: &FrameworkProfile,
        rng: &mut R,
    ) -> Allocation {
        let used = self.ports.get(&(proto, remote));
        let picked = match profile.allocation {
            PortAllocation::Preservation => {
                if internal.port != 0 && !used.is_some_and(|s| s.contains(internal.port)) {
                    Some(internal.port)
                } else {
                    let r = profile.fallback_range;
                    pick_uniform(used, r.lo, r.hi, rng)
                }
            }
            PortAllocation::Random { range_lo, range_hi } => match profile.random_attempts {
                Some(n) => pick_bounded(used, range_lo, range_hi, n, rng),
                None => pick_uniform(used, range_lo, range_hi, rng),
            },
        };
        match (picked, profile.exhaustion) {
            (Some(p), _) => Allocation::Port(p),
            (None, ExhaustionBehavior::DropPacket) => Allocation::Exhausted,
            (None, ExhaustionBehavior::BypassNat) => Allocation::BypassNat,
        }
    }

    fn initial_expiry(profile: &FrameworkProfile, state: EntryState, now: SimTime) -> SimTime {
        let t = &profile.timeouts;
        now.plus_secs(match state {
            EntryState::Tcp(s) => t.for_state(s),
            EntryState::Udp => t.udp_s,
        })
    }

    pub fn create_entry(
        &mut self,
        key: SessionKey,
        initial: EntryState,
        now: SimTime,
        profile: &FrameworkProfile,
    ) -> Result<EntryId, CreateError> {
        let pub_key = (key.proto, key.translated.port, key.remote);
        if self.by_public.contains_key(&pub_key)
            || self.by_internal.contains_key(&(key.proto, key.internal, key.remote))
        {
            return Err(CreateError::Duplicate);
        }
        if profile.table_limit.is_some_and(|l| self.entries.len() >= l) {
            self.stats.table_full += 1;
            return Err(CreateError::TableFull);
        }
        let proxied = key.internal.addr == self.public_addr;
        let dest = (key.internal.addr, key.remote.addr);
        if !proxied {
            if let Some(limit) = profile.dest_conn_limit {
                if self.dest_counts.get(&dest).copied().unwrap_or(0) >= limit {
                    self.stats.conn_limited += 1;
                    return Err(CreateError::ConnLimit);
                }
            }
            *self.dest_counts.entry(dest).or_insert(0) += 1;
        }
        let id = self.next_id;
        self.next_id += 1;
        let expiry = Self::initial_expiry(profile, initial, now);
        let entry = SessionEntry {
            id,
            key,
            state: initial,
            created: now,
            expiry,
            seq: SeqTrack {
                window: profile.rst_window(),
                ..SeqTrack::default()
            },
            challenge_armed: false,
            syn_ack_seen: false,
            reply_seen: false,
            loose: false,
            proxied,
        };
        self.entries.insert(id, entry);
        self.by_internal.insert((key.proto, key.internal, key.remote), id);
        self.by_public.insert(pub_key, id);
        self.ports
            .entry((key.proto, key.remote))
            .or_insert_with(PortSet::new)
            .insert(key.translated.port);
        self.expiries.push(Reverse((expiry, id)));
        self.stats.created += 1;
        Ok(id)
    }

    /// Match a packet against the table. Expired matches are removed.
    pub fn lookup(&mut self, pkt: &Packet, dir: Direction, now: SimTime) -> Option<EntryId> {
        let proto = pkt.proto();
        let id = match dir {
            Direction::Outbound => self.find_internal(proto, pkt.src, pkt.dst)?,
            Direction::Inbound => {
                if pkt.dst.addr != self.public_addr {
                    return None;
                }
                self.find_public(proto, pkt.dst.port, pkt.src)?
            }
        };
        if self.entries[&id].is_live(now) {
            Some(id)
        } else {
            self.remove(id);
            self.stats.expired += 1;
            None
        }
    }

    fn set_expiry(&mut self, id: EntryId, at: SimTime) {
        let e = self.entries.get_mut(&id).expect("live entry");
        if e.expiry != at {
            e.expiry = at;
            self.expiries.push(Reverse((at, id)));
        }
    }

    pub fn remove(&mut self, id: EntryId) -> Option<SessionEntry> {
        let e = self.entries.remove(&id)?;
        let k = e.key;
        self.by_internal.remove(&(k.proto, k.internal, k.remote));
        self.by_public.remove(&(k.proto, k.translated.port, k.remote));
        if let Some(set) = self.ports.get_mut(&(k.proto, k.remote)) {
            set.remove(k.translated.port);
            if set.is_empty() {
                self.ports.remove(&(k.proto, k.remote));
            }
        }
        if !e.proxied {
            let dest = (k.internal.addr, k.remote.addr);
            if let Some(c) = self.dest_counts.get_mut(&dest) {
                *c -= 1;
                if *c == 0 {
                    self.dest_counts.remove(&dest);
                }
            }
        }
        Some(e)
    }

    /// Remove every entry with expiry at or before `now`, oldest first.
    pub fn expire_sweep(&mut self, now: SimTime) -> Vec<SessionEntry> {
        let mut out = Vec::new();
        while let Some(&Reverse((at, id))) = self.expiries.peek() {
            if at > now {
                break;
            }
            self.expiries.pop();
            // Stale heap items carry an expiry the entry no longer has.
            if self.entries.get(&id).is_some_and(|e| e.expiry == at) {
                out.extend(self.remove(id));
                self.stats.expired += 1;
            }
        }
        out
    }

    /// The earliest pending expiry, if any.
    pub fn next_expiry(&mut self) -> Option<SimTime> {
        while let Some(&Reverse((at, id))) = self.expiries.peek() {
            if self.entries.get(&id).is_some_and(|e| e.expiry == at) {
                return Some(at);
            }
            self.expiries.pop();
        }
        None
    }

    fn refresh_timeout(e: &SessionEntry, profile: &FrameworkProfile) -> u64 {
        let t = &profile.timeouts;
        match e.state {
            EntryState::Udp => t.udp_s,
            EntryState::Tcp(TcpConnState::Established) if e.loose && !e.reply_seen => t.unacknowledged_s,
            EntryState::Tcp(s) => t.for_state(s),
        }
    }

    pub fn handle_segment(
        &mut self,
        id: EntryId,
        pkt: &Packet,
        dir: Direction,
        profile: &FrameworkProfile,
        now: SimTime,
    ) -> TransitionResult {
        let seg = match &pkt.body {
            Transport::Udp(_) => {
                self.set_expiry(id, now.plus_secs(profile.timeouts.udp_s));
                let e = &self.entries[&id];
                return TransitionResult {
                    new_state: e.state,
                    new_expiry: e.expiry,
                    forward: true,
                    side_effect: SideEffect::None,
                };
            }
            Transport::Tcp(seg) => seg,
        };
        if seg.flags.rst() {
            let r = self.handle_rst(id, pkt, dir, profile, now);
            let e = &self.entries[&id];
            return TransitionResult {
                new_state: e.state,
                new_expiry: e.expiry,
                forward: r.action != RstAction::Ignored,
                side_effect: if r.challenge_ack_armed {
                    SideEffect::ChallengeAckExpected
                } else {
                    SideEffect::None
                },
            };
        }

        let e = self.entries.get_mut(&id).expect("live entry");
        match dir {
            Direction::Outbound => {
                if seg.flags.ack() {
                    e.seq.last_ack = seg.ack;
                }
            }
            Direction::Inbound => {
                let mut next = seg.seq.wrapping_add(seg.payload_len());
                if seg.flags.syn() {
                    next = next.wrapping_add(1);
                }
                e.seq.last_seq = next;
                if seg.flags.ack() {
                    e.seq.peer_ack = seg.ack;
                }
                e.reply_seen = true;
            }
        }

        let state = e.tcp_state().expect("tcp entry");
        let pure_ack = seg.flags == crate::netsim::packet::TcpFlags::ACK && seg.payload.is_empty();
        let mut side = SideEffect::None;
        let mut new_expiry = None;
        match (state, dir) {
            (TcpConnState::SynSent, Direction::Inbound) => {
                if seg.flags.is_syn_ack() {
                    e.syn_ack_seen = true;
                    new_expiry = Some(now.plus_secs(profile.timeouts.syn_sent_s));
                }
            }
            (TcpConnState::SynSent, Direction::Outbound) => {
                if seg.flags.is_syn_only() {
                    new_expiry = Some(now.plus_secs(profile.timeouts.syn_sent_s));
                } else if seg.flags.ack() && e.syn_ack_seen {
                    e.state = EntryState::Tcp(TcpConnState::Established);
                    new_expiry = Some(now.plus_secs(profile.timeouts.established_s));
                }
            }
            (TcpConnState::Established, Direction::Outbound) if e.challenge_armed && pure_ack => {
                side = SideEffect::ChallengeAckRestored;
            }
            (TcpConnState::Established, _) => {
                e.challenge_armed = false;
                new_expiry = Some(now.plus_secs(Self::refresh_timeout(e, profile)));
            }
            (TcpConnState::Close, Direction::Outbound) if seg.flags.is_syn_only() => {
                e.state = EntryState::Tcp(TcpConnState::SynSent);
                e.syn_ack_seen = false;
                e.challenge_armed = false;
                new_expiry = Some(now.plus_secs(profile.timeouts.syn_sent_s));
            }
            (TcpConnState::Close, _) => {}
        }
        if side == SideEffect::ChallengeAckRestored {
            self.on_challenge_ack(id, profile, now);
        }
        if let Some(t) = new_expiry {
            self.set_expiry(id, t);
        }
        let e = &self.entries[&id];
        TransitionResult {
            new_state: e.state,
            new_expiry: e.expiry,
            forward: true,
            side_effect: side,
        }
    }

    pub fn handle_rst(
        &mut self,
        id: EntryId,
        pkt: &Packet,
        dir: Direction,
        profile: &FrameworkProfile,
        now: SimTime,
    ) -> RstResult {
        let seg = pkt.tcp_segment().expect("tcp rst");
        let e = &self.entries[&id];
        let expected = match dir {
            Direction::Inbound => e.seq.last_ack,
            Direction::Outbound => e.seq.peer_ack,
        };
        let policy = if e.proxied {
            RstPolicy::Strict
        } else {
            profile.rst_policy
        };
        let state = e.tcp_state().expect("tcp entry");
        let close = |t: &mut Self| {
            let e = t.entries.get_mut(&id).expect("live entry");
            e.state = EntryState::Tcp(TcpConnState::Close);
            e.challenge_armed = false;
            t.set_expiry(id, now.plus_secs(profile.timeouts.close_s));
            t.stats.rst_accepted += 1;
            RstResult {
                action: RstAction::Closed,
                challenge_ack_armed: false,
            }
        };
        let ignored = |t: &mut Self| {
            t.stats.rst_ignored += 1;
            RstResult {
                action: RstAction::Ignored,
                challenge_ack_armed: false,
            }
        };
        match policy {
            RstPolicy::NoCheck => close(self),
            RstPolicy::Strict => {
                if seg.seq == expected {
                    close(self)
                } else {
                    ignored(self)
                }
            }
            RstPolicy::InWindow {
                window,
                reduced_timeout_s,
                ..
            } => {
                if seq_distance(seg.seq, expected) >= window {
                    return ignored(self);
                }
                if state != TcpConnState::Established {
                    return close(self);
                }
                self.entries.get_mut(&id).expect("live entry").challenge_armed = true;
                self.set_expiry(id, now.plus_secs(reduced_timeout_s));
                self.stats.rst_accepted += 1;
                RstResult {
                    action: RstAction::TimeoutReduced,
                    challenge_ack_armed: true,
                }
            }
        }
    }

    /// Restore an armed entry's timeout. Returns whether anything changed.
    pub fn on_challenge_ack(&mut self, id: EntryId, profile: &FrameworkProfile, now: SimTime) -> bool {
        let Some(e) = self.entries.get_mut(&id) else {
            return false;
        };
        if !e.challenge_armed {
            return false;
        }
        e.challenge_armed = false;
        let restore = match profile.rst_policy {
            RstPolicy::InWindow { restore_timeout_s, .. } => restore_timeout_s,
            _ => profile.timeouts.established_s,
        };
        self.set_expiry(id, now.plus_secs(restore));
        true
    }

    /// Create an ESTABLISHED entry from an outbound mid-stream TCP packet.
    pub fn loose_instantiate<R: Rng>(
        &mut self,
        pkt: &Packet,
        profile: &FrameworkProfile,
        now: SimTime,
        rng: &mut R,
    ) -> Result<EntryId, LooseError> {
        let seg = pkt.tcp_segment().ok_or(LooseError::Refused)?;
        if !profile.loose_instantiation || seg.flags.syn() || seg.flags.rst() {
            return Err(LooseError::Refused);
        }
        let port = match self.allocate_port(Protocol::Tcp, pkt.src, pkt.dst, profile, rng) {
            Allocation::Port(p) => p,
            Allocation::Exhausted => return Err(LooseError::Exhausted),
            Allocation::BypassNat => return Err(LooseError::BypassNat),
        };
        let key = SessionKey {
            proto: Protocol::Tcp,
            internal: pkt.src,
            translated: Endpoint::new(self.public_addr, port),
            remote: pkt.dst,
        };
        let id = self.create_entry(key, EntryState::Tcp(TcpConnState::Established), now, profile)?;
        let e = self.entries.get_mut(&id).expect("just created");
        e.loose = true;
        e.seq.last_ack = seg.ack;
        e.seq.peer_ack = seg.seq.wrapping_add(seg.payload_len());
        self.set_expiry(id, now.plus_secs(profile.timeouts.unacknowledged_s));
        self.stats.loose_created += 1;
        Ok(id)
    }
}

//! Shared fixtures for the criterion benches.

use vpnsim::conntrack::{ConnTable, EntryState, SessionKey, TcpConnState};
use vpnsim::{Addr, Endpoint, FrameworkProfile, Protocol, SimTime};

pub const PUBLIC: Addr = Addr::new(198, 51, 100, 1);

pub fn server() -> Endpoint {
    Endpoint::new(Addr::new(203, 0, 113, 10), 80)
}

pub fn internal(port: u16) -> Endpoint {
    Endpoint::new(Addr::new(10, 8, 0, 2), port)
}

pub fn key(port: u16) -> SessionKey {
    SessionKey {
        proto: Protocol::Tcp,
        internal: internal(port),
        translated: Endpoint::new(PUBLIC, port),
        remote: server(),
    }
}

/// A table holding `n` SYN_SENT entries on ports from 1024 up.
pub fn filled_table(profile: &FrameworkProfile, n: u16) -> ConnTable {
    let mut t = ConnTable::new(PUBLIC);
    for port in (1024..).take(n as usize) {
        t.create_entry(
            key(port),
            EntryState::Tcp(TcpConnState::SynSent),
            SimTime::ZERO,
            profile,
        )
        .expect("room in table");
    }
    t
}

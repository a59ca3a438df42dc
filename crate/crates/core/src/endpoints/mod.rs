//! Victim client, target server and DNS resolver.

mod client;
mod resolver;
mod server;

pub use client::{
    Client, ClientBehavior, ClientLog, ConnState, Delivery, DnsOutcome, DnsQuery, DnsVerdict, TcpConn, DEFAULT_RESOLVER,
};
pub use resolver::{Resolver, ResolverBehavior};
pub use server::{Server, ServerBehavior, ServerConn, ServerLog};

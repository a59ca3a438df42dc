//! Simulation of NAT-based attacks against VPN servers.
//!
//! A deterministic discrete-event network hosts a VPN gateway whose
//! connection tracker follows one of several framework profiles, a victim
//! client, a server, a DNS resolver and an attacker that is itself a VPN
//! client. The [`attacks`] module drives the attacker.

pub mod attacks;
pub mod config;
pub mod conntrack;
pub mod endpoints;
pub mod gateway;
pub mod harness;
pub mod netsim;
pub mod rng;
pub mod scenario;
pub mod types;

pub use attacks::AttackReport;
pub use conntrack::{Framework, FrameworkProfile, PortAllocation, RstPolicy};
pub use gateway::{Gateway, GatewayConfig};
pub use harness::{MatrixRow, Summary};
pub use netsim::packet::{Packet, TcpFlags, TcpSegment};
pub use netsim::{HostId, Sim, SimConfig};
pub use rng::SimRng;
pub use scenario::{AttackKind, Scenario, World};
pub use types::{Addr, Endpoint, PortRange, Protocol, SimTime};

//! Per-simulation randomness split into independent named streams.
//!
//! Every stream is a ChaCha8 generator keyed by the simulation seed and
//! separated by the ChaCha stream id, so draws in one subsystem never shift
//! the sequence seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    PortAllocation = 1,
    TxId = 2,
    Jitter = 3,
    Isn = 4,
    Loss = 5,
    ClientPorts = 6,
}

fn stream(seed: u64, s: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s as u64);
    rng
}

#[derive(Debug, Clone)]
pub struct SimRng {
    pub port_alloc: ChaCha8Rng,
    pub txid: ChaCha8Rng,
    pub jitter: ChaCha8Rng,
    pub isn: ChaCha8Rng,
    pub loss: ChaCha8Rng,
    pub client_ports: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        SimRng {
            port_alloc: stream(seed, Stream::PortAllocation),
            txid: stream(seed, Stream::TxId),
            jitter: stream(seed, Stream::Jitter),
            isn: stream(seed, Stream::Isn),
            loss: stream(seed, Stream::Loss),
            client_ports: stream(seed, Stream::ClientPorts),
        }
    }
}

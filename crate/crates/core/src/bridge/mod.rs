//! Line-delimited JSON co-simulation protocol: a plant server that owns the
//! simulated process and a client that closes the loop over TCP.
//!
//! Each request is one JSON object on one LF-terminated line and receives
//! exactly one reply line. See `PROTOCOL.md` for the wire format.

mod client;
mod protocol;
mod server;

pub use client::{run_bridge_loop, BridgeClient, BridgeRun, DEFAULT_TIMEOUT};
pub use protocol::{Reply, Request, Role, Variable, PROTOCOL_VERSION};
pub use server::{serve_plant, ServeSummary, Session, MAX_LINE_BYTES};

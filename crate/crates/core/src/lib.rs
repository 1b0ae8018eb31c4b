//! Secure coded file distribution over vehicular networks.
//!
//! A source splits a file into `k` packets, precodes them at a fixed low rate
//! and publishes signed hashes of every coded packet, so relays can check each
//! packet before forwarding it. The crate holds the packet-level simulator
//! (line networks and an urban grid with a CSMA channel), four baseline
//! schemes, and the fluid-limit analysis of per-hop delay.

pub mod analysis;
pub mod coding;
pub mod engine;
pub mod error;
pub mod mac;
pub mod schemes;
pub mod security;
pub mod topology;

pub use coding::{CodedId, CodedPacket, DecodeState, FileSpec, PacketKind, Precode};
pub use engine::{run, sweep, Metrics, RunConfig, SweepSummary, Topology, UrbanConfig};
pub use error::{Error, Result};
pub use mac::RadioConfig;
pub use schemes::{SchemeConfig, SchemeKind};
pub use security::OverheadConfig;

//! Symbolic erasure coding.
//!
//! Packets are tracked by identity only. Under the ideal-code assumption any
//! `k` distinct coded packets of a file reconstruct it, so payload bytes never
//! influence delay and are carried only as a size for overhead accounting.
//!
//! Two code families are modelled:
//!
//! * a fixed-rate precode of rate `1/M`, whose `M·k` coded packets are
//!   numbered `0..M·k`;
//! * an idealized rateless code, where every emitter owns an unbounded
//!   counter and ids are `(origin, sequence)` pairs packed into a `u64`.

use indexmap::IndexSet;
use rand::Rng;

use crate::error::{Error, Result};

/// Identity of a coded packet.
pub type CodedId = u64;

/// Inverse rate of the precode applied at the source.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precode {
    /// Fixed-rate `1/M` code producing `M·k` coded packets.
    Fixed(u32),
    /// Rateless code with an unbounded id space.
    Rateless,
}

impl Precode {
    pub fn inverse_rate(self) -> Option<u32> {
        match self {
            Precode::Fixed(m) => Some(m),
            Precode::Rateless => None,
        }
    }
}

impl std::fmt::Display for Precode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Precode::Fixed(m) => write!(f, "{m}"),
            Precode::Rateless => f.write_str("inf"),
        }
    }
}

/// Shape of the file being distributed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FileSpec {
    /// Number of source packets.
    pub k: u32,
    pub packet_bytes: u32,
    pub precode: Precode,
}

/// Smallest packet that still leaves room next to a signature.
pub const MIN_PACKET_BYTES: u32 = 300;

impl FileSpec {
    pub fn new(k: u32, packet_bytes: u32, precode: Precode) -> Result<Self> {
        let spec = FileSpec {
            k,
            packet_bytes,
            precode,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("file.k", "must be at least 1"));
        }
        if self.packet_bytes < MIN_PACKET_BYTES {
            return Err(Error::invalid(
                "file.packet_bytes",
                format!("must be at least {MIN_PACKET_BYTES}"),
            ));
        }
        if let Precode::Fixed(m) = self.precode {
            if m < 2 {
                return Err(Error::invalid("scheme.M", "finite inverse rate must be at least 2"));
            }
        }
        Ok(())
    }

    /// Same file with a different decode threshold, e.g. after re-packetizing
    /// around per-packet signatures.
    pub fn with_k(self, k: u32) -> Self {
        FileSpec { k, ..self }
    }

    pub fn with_precode(self, precode: Precode) -> Self {
        FileSpec { precode, ..self }
    }
}

/// Number of distinct coded packets of a fixed-rate precode.
pub fn coded_id_space(spec: &FileSpec) -> Result<u64> {
    match spec.precode {
        Precode::Fixed(m) => Ok(u64::from(m) * u64::from(spec.k)),
        Precode::Rateless => Err(Error::UnboundedIdSpace),
    }
}

const SEQ_BITS: u32 = 40;

/// Packs a rateless `(origin, sequence)` pair into a single id.
pub fn rateless_id(origin: u32, seq: u64) -> CodedId {
    debug_assert!(seq < (1 << SEQ_BITS));
    (u64::from(origin) << SEQ_BITS) | seq
}

/// Emitter that produced a rateless id.
pub fn rateless_origin(id: CodedId) -> u32 {
    (id >> SEQ_BITS) as u32
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PacketKind {
    /// Packet of the fixed-rate precode, id in `0..M·k`.
    DataCoded(CodedId),
    /// Signed packet carrying a block of per-coded-packet hashes.
    HashInfo(u32),
    /// Packet of the rateless code.
    RatelessCoded(CodedId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CodedPacket {
    pub kind: PacketKind,
    /// `false` marks a polluted payload.
    pub authentic: bool,
    pub size_bytes: u32,
}

impl CodedPacket {
    pub fn data(id: CodedId, authentic: bool, size_bytes: u32) -> Self {
        CodedPacket {
            kind: PacketKind::DataCoded(id),
            authentic,
            size_bytes,
        }
    }

    pub fn rateless(id: CodedId, authentic: bool, size_bytes: u32) -> Self {
        CodedPacket {
            kind: PacketKind::RatelessCoded(id),
            authentic,
            size_bytes,
        }
    }

    pub fn hash_info(id: u32, size_bytes: u32) -> Self {
        CodedPacket {
            kind: PacketKind::HashInfo(id),
            authentic: true,
            size_bytes,
        }
    }

    /// Coded id of a data-bearing packet, `None` for hash information.
    pub fn data_id(&self) -> Option<CodedId> {
        match self.kind {
            PacketKind::DataCoded(id) | PacketKind::RatelessCoded(id) => Some(id),
            PacketKind::HashInfo(_) => None,
        }
    }
}

/// Verified coded packets held by one node.
///
/// `received` never holds a polluted id; decoding is declared as soon as it
/// holds `k` distinct ids and never reverts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DecodeState {
    received: IndexSet<CodedId>,
    decoded: bool,
}

impl DecodeState {
    pub fn new() -> Self {
        Self::default()
    }

    /// State of a node that holds the whole file from the start.
    pub fn complete() -> Self {
        DecodeState {
            received: IndexSet::new(),
            decoded: true,
        }
    }

    /// Inserts a verified id, returning whether it was new.
    pub fn insert(&mut self, id: CodedId) -> bool {
        self.received.insert(id)
    }

    pub fn contains(&self, id: CodedId) -> bool {
        self.received.contains(&id)
    }

    pub fn len(&self) -> usize {
        self.received.len()
    }

    pub fn is_empty(&self) -> bool {
        self.received.is_empty()
    }

    pub fn is_decoded(&self) -> bool {
        self.decoded
    }

    pub fn ids(&self) -> &IndexSet<CodedId> {
        &self.received
    }

    /// Marks the state decoded once `k` distinct ids are held.
    pub fn try_decode(&mut self, spec: &FileSpec) -> bool {
        if !self.decoded && self.received.len() >= spec.k as usize {
            self.decoded = true;
        }
        self.decoded
    }

    /// Scaled buffer occupancy `|H|/k`, or `M` once decoded (infinite for a
    /// rateless code).
    pub fn buffer_fullness(&self, spec: &FileSpec) -> f64 {
        if self.decoded {
            match spec.precode {
                Precode::Fixed(m) => f64::from(m),
                Precode::Rateless => f64::INFINITY,
            }
        } else {
            self.received.len() as f64 / f64::from(spec.k)
        }
    }
}

/// Free-function form of [`DecodeState::try_decode`].
pub fn try_decode(state: &mut DecodeState, spec: &FileSpec) -> bool {
    state.try_decode(spec)
}

/// Free-function form of [`DecodeState::buffer_fullness`].
pub fn buffer_fullness(state: &DecodeState, spec: &FileSpec) -> f64 {
    state.buffer_fullness(spec)
}

/// Uniformly random element of `available`.
pub fn sample_fresh_coded<R: Rng + ?Sized>(
    rng: &mut R,
    available: &IndexSet<CodedId>,
) -> Result<CodedId> {
    if available.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let idx = rng.random_range(0..available.len());
    Ok(available[idx])
}

/// Uniformly random id of the full fixed-rate code space.
pub fn sample_full_space<R: Rng + ?Sized>(rng: &mut R, spec: &FileSpec) -> Result<CodedId> {
    let space = coded_id_space(spec)?;
    Ok(rng.random_range(0..space))
}

/// Per-emitter counter of a rateless encoder; every draw is a never-before-seen id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RatelessEncoder {
    origin: u32,
    next: u64,
}

impl RatelessEncoder {
    pub fn new(origin: u32) -> Self {
        RatelessEncoder { origin, next: 0 }
    }

    pub fn next_id(&mut self) -> CodedId {
        let id = rateless_id(self.origin, self.next);
        self.next += 1;
        id
    }

    pub fn emitted(&self) -> u64 {
        self.next
    }
}

//! Per-node behavior of the distribution schemes.
//!
//! | scheme | code | relay forwards before decode | relay after decode | verification |
//! |---|---|---|---|---|
//! | Precode-and-Hash | fixed `1/M` | verified packets | re-encodes | hash ledger |
//! | Wait-to-Decode | rateless | nothing | re-encodes | whole-file signature |
//! | Sign-every-Packet | rateless, 1345 signed packets | received packets | received packets | per-packet signature |
//! | Genie Precode | rateless | received packets | re-encodes | free |
//! | Proportional forwarding | fixed `1/M` | verified packets, gated by buffer fraction | re-encodes | hash ledger |

use indexmap::IndexMap;
use rand::Rng;

use crate::coding::{
    rateless_origin, sample_fresh_coded, sample_full_space, CodedId, CodedPacket, DecodeState, FileSpec,
    PacketKind, Precode, RatelessEncoder,
};
use crate::error::{Error, Result};
use crate::mac::RadioConfig;
use crate::security::{
    adversary_emit, classify, hash_packet_count, signed_packet_count, HashLayout, HashLedger, OverheadConfig,
    Verdict,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    PrecodeAndHash,
    WaitToDecode,
    SignEveryPacket,
    GeniePrecode,
    ProportionalForwarding,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 5] = [
        SchemeKind::PrecodeAndHash,
        SchemeKind::WaitToDecode,
        SchemeKind::SignEveryPacket,
        SchemeKind::GeniePrecode,
        SchemeKind::ProportionalForwarding,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::PrecodeAndHash => "PrecodeAndHash",
            SchemeKind::WaitToDecode => "WaitToDecode",
            SchemeKind::SignEveryPacket => "SignEveryPacket",
            SchemeKind::GeniePrecode => "GeniePrecode",
            SchemeKind::ProportionalForwarding => "ProportionalForwarding",
        }
    }

    fn uses_hashes(self) -> bool {
        matches!(self, SchemeKind::PrecodeAndHash | SchemeKind::ProportionalForwarding)
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid("scheme.scheme", format!("unknown scheme {s:?}")))
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    /// Length of the initial hash-only phase; `None` picks the shortest phase
    /// that lets one node broadcast every hash-information packet once.
    pub hash_first_slots: Option<u64>,
    pub hash_forward_prob: f64,
    /// Seeding lasts this many times the time to send `k` packets.
    pub seed_multiplier: f64,
    pub seeding_rate_pps: f64,
    /// When `false`, precode relays forward data without any check
    /// (the unprotected rateless-forwarding baseline).
    pub verification: bool,
    /// Maximum number of unverifiable packets a node keeps aside.
    pub quarantine_capacity: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            kind: SchemeKind::PrecodeAndHash,
            hash_first_slots: None,
            hash_forward_prob: 0.2,
            seed_multiplier: 5.0,
            seeding_rate_pps: 60.0,
            verification: true,
            quarantine_capacity: 1000,
        }
    }
}

impl SchemeConfig {
    pub fn with_kind(kind: SchemeKind) -> Self {
        SchemeConfig {
            kind,
            ..SchemeConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.hash_forward_prob) {
            return Err(Error::invalid("scheme.hash_forward_prob", "must lie in [0, 1]"));
        }
        if !(self.seed_multiplier > 0.0) {
            return Err(Error::invalid("scheme.seed_multiplier", "must be positive"));
        }
        if !(self.seeding_rate_pps > 0.0) {
            return Err(Error::invalid("scheme.seeding_rate", "must be positive"));
        }
        Ok(())
    }
}

/// Seeding window, in seconds and whole slots.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeedingWindow {
    pub seconds: f64,
    pub slots: u64,
}

/// Sources seed for `seed_multiplier · k / seeding_rate` seconds, measured
/// against the original file size whatever the scheme's packet count.
pub fn seeding_schedule(spec: &FileSpec, cfg: &SchemeConfig, radio: &RadioConfig) -> SeedingWindow {
    let seconds = cfg.seed_multiplier * f64::from(spec.k) / cfg.seeding_rate_pps;
    let slots = (seconds / radio.slot_seconds - 1e-9).ceil().max(0.0) as u64;
    SeedingWindow { seconds, slots }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Source,
    Relay,
    Malicious,
}

/// Everything a node needs to know about the run it belongs to.
#[derive(Clone, Debug)]
pub struct SchemeContext {
    pub cfg: SchemeConfig,
    /// Decode threshold and code family seen by receivers of this scheme.
    pub data_spec: FileSpec,
    pub overhead: OverheadConfig,
    pub layout: Option<HashLayout>,
    pub hash_first_slots: u64,
    /// Sources fall silent after this many slots; `None` means never.
    pub seeding_slots: Option<u64>,
    /// Hash traffic off and ledgers preloaded, as in the line-network model.
    pub preloaded_hashes: bool,
}

impl SchemeContext {
    pub fn new(
        cfg: SchemeConfig,
        file: &FileSpec,
        overhead: OverheadConfig,
        radio: &RadioConfig,
        preloaded_hashes: bool,
    ) -> Result<Self> {
        cfg.validate()?;
        file.validate()?;
        overhead.validate(file)?;
        let (data_spec, layout) = match cfg.kind {
            SchemeKind::PrecodeAndHash | SchemeKind::ProportionalForwarding => {
                if file.precode == Precode::Rateless {
                    return Err(Error::invalid(
                        "scheme.M",
                        format!("{} needs a finite precode", cfg.kind),
                    ));
                }
                let layout = if cfg.verification {
                    Some(hash_packet_count(file, &overhead)?)
                } else {
                    None
                };
                (*file, layout)
            }
            SchemeKind::GeniePrecode | SchemeKind::WaitToDecode => (file.with_precode(Precode::Rateless), None),
            SchemeKind::SignEveryPacket => {
                let file_bytes = u64::from(file.k) * u64::from(file.packet_bytes);
                let k = signed_packet_count(file_bytes, file, &overhead)?;
                (file.with_k(k).with_precode(Precode::Rateless), None)
            }
        };
        let hash_first_slots = match (layout, preloaded_hashes) {
            (Some(l), false) => cfg
                .hash_first_slots
                .unwrap_or_else(|| u64::from(l.packet_count).div_ceil(u64::from(radio.packets_per_slot))),
            _ => 0,
        };
        Ok(SchemeContext {
            cfg,
            data_spec,
            overhead,
            layout,
            hash_first_slots,
            seeding_slots: None,
            preloaded_hashes,
        })
    }

    pub fn with_seeding(mut self, slots: Option<u64>) -> Self {
        self.seeding_slots = slots;
        self
    }

    fn hash_traffic(&self) -> bool {
        self.layout.is_some() && !self.preloaded_hashes
    }

    fn verifies(&self) -> bool {
        self.cfg.verification || !self.cfg.kind.uses_hashes()
    }
}

/// What a delivered packet did to its receiver.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReceiveOutcome {
    /// A coded id (or hash-information packet) the node did not hold.
    New,
    Duplicate,
    /// Polluted packet caught and discarded.
    Dropped,
    /// Kept aside until the covering hash arrives.
    Quarantined,
    /// Receiver ignores traffic (sources, adversaries).
    Ignored,
}

#[derive(Clone, Debug)]
pub struct NodeState {
    pub id: u32,
    pub role: Role,
    pub decode: DecodeState,
    pub ledger: Option<HashLedger>,
    pub quarantine: Vec<CodedPacket>,
    /// Unverified packets by id, with their ground-truth authenticity.
    pub staged: IndexMap<CodedId, bool>,
    encoder: RatelessEncoder,
    pub decoded_at_slot: Option<u64>,
    pub useful_tx: u64,
    pub wasted_tx: u64,
    pub polluted_dropped: u64,
    pub failed_decodes: u64,
    /// Polluted packets taken into the unverified buffer.
    pub polluted_accepted: u64,
    /// For rateless schemes: whether the decoding set held a packet
    /// re-encoded by a relay rather than a source.
    pub decoded_via_relay: Option<bool>,
}

impl NodeState {
    pub fn new(id: u32, role: Role, ctx: &SchemeContext) -> Self {
        let ledger = ctx.layout.map(|l| {
            if role == Role::Source || ctx.preloaded_hashes {
                HashLedger::full(l)
            } else {
                HashLedger::new(l)
            }
        });
        NodeState {
            id,
            role,
            decode: if role == Role::Source {
                DecodeState::complete()
            } else {
                DecodeState::new()
            },
            ledger,
            quarantine: Vec::new(),
            staged: IndexMap::new(),
            encoder: RatelessEncoder::new(id),
            decoded_at_slot: if role == Role::Source { Some(0) } else { None },
            useful_tx: 0,
            wasted_tx: 0,
            polluted_dropped: 0,
            failed_decodes: 0,
            polluted_accepted: 0,
            decoded_via_relay: None,
        }
    }

    pub fn is_honest(&self) -> bool {
        self.role != Role::Malicious
    }

    pub fn is_decoded(&self) -> bool {
        self.decode.is_decoded()
    }

    /// Number of data packets the node could forward or decode from.
    pub fn held(&self) -> usize {
        self.decode.len().max(self.staged.len())
    }

    /// Whether the node would put something on the air if elected.
    pub fn has_send_intent(&self, ctx: &SchemeContext, slot: u64) -> bool {
        match self.role {
            Role::Malicious => true,
            Role::Source => ctx.seeding_slots.is_none_or(|s| slot < s),
            Role::Relay => {
                let hashes = ctx.hash_traffic() && self.ledger.as_ref().is_some_and(|l| !l.is_empty());
                if self.is_decoded() {
                    return ctx.cfg.kind != SchemeKind::SignEveryPacket || !self.decode.is_empty() || hashes;
                }
                match ctx.cfg.kind {
                    SchemeKind::WaitToDecode => false,
                    SchemeKind::PrecodeAndHash | SchemeKind::ProportionalForwarding if !ctx.verifies() => {
                        !self.staged.is_empty()
                    }
                    _ => !self.decode.is_empty() || hashes,
                }
            }
        }
    }

    fn held_hash<R: Rng + ?Sized>(&self, ctx: &SchemeContext, rng: &mut R) -> Option<CodedPacket> {
        if !ctx.hash_traffic() {
            return None;
        }
        let ledger = self.ledger.as_ref()?;
        if ledger.is_empty() {
            return None;
        }
        let nth = rng.random_range(0..ledger.len() as usize);
        let id = ledger.held().nth(nth)?;
        Some(CodedPacket::hash_info(id, ctx.data_spec.packet_bytes))
    }

    /// Data packet drawn from the node's own holdings.
    fn held_data<R: Rng + ?Sized>(&mut self, ctx: &SchemeContext, rng: &mut R) -> Option<CodedPacket> {
        let bytes = ctx.data_spec.packet_bytes;
        let reencodes = self.role == Role::Source
            || (self.is_decoded() && ctx.cfg.kind != SchemeKind::SignEveryPacket);
        let fixed = matches!(ctx.data_spec.precode, Precode::Fixed(_));
        if reencodes {
            return Some(if fixed {
                CodedPacket::data(sample_full_space(rng, &ctx.data_spec).ok()?, true, bytes)
            } else {
                CodedPacket::rateless(self.encoder.next_id(), true, bytes)
            });
        }
        let wrap = |id, authentic| {
            if fixed {
                CodedPacket::data(id, authentic, bytes)
            } else {
                CodedPacket::rateless(id, authentic, bytes)
            }
        };
        if ctx.verifies() {
            let id = sample_fresh_coded(rng, self.decode.ids()).ok()?;
            Some(wrap(id, true))
        } else {
            if self.staged.is_empty() {
                return None;
            }
            let (&id, &authentic) = self.staged.get_index(rng.random_range(0..self.staged.len()))?;
            Some(wrap(id, authentic))
        }
    }

    /// Packet the node broadcasts when elected, or `None` to stay silent.
    pub fn select_transmission<R: Rng + ?Sized>(
        &mut self,
        ctx: &SchemeContext,
        slot: u64,
        rng: &mut R,
    ) -> Option<CodedPacket> {
        if !self.transmit_gate(ctx, rng) {
            return None;
        }
        self.pick_packet(ctx, slot, rng)
    }

    /// Up to `count` distinct packets for one elected slot. A draw that repeats
    /// a packet already in the batch is retried a few times and then skipped,
    /// so small buffers yield short batches. The proportional-forwarding coin
    /// is tossed once per slot.
    pub fn select_batch<R: Rng + ?Sized>(
        &mut self,
        ctx: &SchemeContext,
        slot: u64,
        count: u32,
        rng: &mut R,
    ) -> Vec<CodedPacket> {
        if !self.transmit_gate(ctx, rng) {
            return Vec::new();
        }
        const RETRIES: usize = 8;
        let mut batch: Vec<CodedPacket> = Vec::with_capacity(count as usize);
        for _ in 0..count {
            for _ in 0..RETRIES {
                match self.pick_packet(ctx, slot, rng) {
                    Some(p) if !batch.contains(&p) => {
                        batch.push(p);
                        break;
                    }
                    Some(_) => continue,
                    None => break,
                }
            }
        }
        batch
    }

    fn transmit_gate<R: Rng + ?Sized>(&self, ctx: &SchemeContext, rng: &mut R) -> bool {
        match self.role {
            Role::Malicious => true,
            Role::Source => true,
            Role::Relay => {
                if ctx.cfg.kind == SchemeKind::ProportionalForwarding && !self.is_decoded() {
                    let frac = (self.held() as f64 / f64::from(ctx.data_spec.k)).min(1.0);
                    rng.random::<f64>() < frac
                } else {
                    true
                }
            }
        }
    }

    fn pick_packet<R: Rng + ?Sized>(&mut self, ctx: &SchemeContext, slot: u64, rng: &mut R) -> Option<CodedPacket> {
        match self.role {
            Role::Malicious => return Some(adversary_emit(rng, &ctx.data_spec, self.id)),
            Role::Source if ctx.seeding_slots.is_some_and(|s| slot >= s) => return None,
            _ => {}
        }
        match ctx.cfg.kind {
            SchemeKind::WaitToDecode if !self.is_decoded() && self.role == Role::Relay => None,
            SchemeKind::PrecodeAndHash | SchemeKind::ProportionalForwarding if ctx.hash_traffic() => {
                if slot < ctx.hash_first_slots {
                    return self.held_hash(ctx, rng);
                }
                if rng.random::<f64>() < ctx.cfg.hash_forward_prob {
                    self.held_hash(ctx, rng).or_else(|| self.held_data(ctx, rng))
                } else {
                    self.held_data(ctx, rng).or_else(|| self.held_hash(ctx, rng))
                }
            }
            _ => self.held_data(ctx, rng),
        }
    }

    /// Handles a delivered packet and attempts decoding.
    pub fn on_receive(&mut self, ctx: &SchemeContext, packet: &CodedPacket, slot: u64) -> ReceiveOutcome {
        if self.role != Role::Relay {
            return ReceiveOutcome::Ignored;
        }
        let outcome = match packet.kind {
            PacketKind::HashInfo(h) => self.receive_hash(ctx, h),
            PacketKind::DataCoded(id) | PacketKind::RatelessCoded(id) => self.receive_data(ctx, packet, id),
        };
        self.attempt_decode(ctx, slot);
        outcome
    }

    fn receive_hash(&mut self, ctx: &SchemeContext, hash_id: u32) -> ReceiveOutcome {
        let Some(ledger) = self.ledger.as_mut() else {
            return ReceiveOutcome::Ignored;
        };
        if !ledger.insert(hash_id) {
            return ReceiveOutcome::Duplicate;
        }
        if !self.quarantine.is_empty() {
            let ledger = self.ledger.as_ref().expect("ledger present");
            let mut kept = Vec::with_capacity(self.quarantine.len());
            for p in std::mem::take(&mut self.quarantine) {
                match classify(&p, ledger) {
                    Verdict::Authentic => {
                        self.decode.insert(p.data_id().expect("quarantine holds data"));
                    }
                    Verdict::Polluted => self.polluted_dropped += 1,
                    Verdict::Unknown => kept.push(p),
                }
            }
            self.quarantine = kept;
        }
        let _ = ctx;
        ReceiveOutcome::New
    }

    fn receive_data(&mut self, ctx: &SchemeContext, packet: &CodedPacket, id: CodedId) -> ReceiveOutcome {
        if self.is_decoded() {
            // Sign-every-Packet relays cannot re-encode, so they keep
            // collecting signed packets to forward.
            if ctx.cfg.kind == SchemeKind::SignEveryPacket && packet.authentic {
                return if self.decode.insert(id) {
                    ReceiveOutcome::New
                } else {
                    ReceiveOutcome::Duplicate
                };
            }
            return if packet.authentic {
                ReceiveOutcome::Duplicate
            } else {
                self.polluted_dropped += 1;
                ReceiveOutcome::Dropped
            };
        }
        let staged = ctx.cfg.kind == SchemeKind::WaitToDecode || !ctx.verifies();
        if staged {
            if self.staged.contains_key(&id) {
                return ReceiveOutcome::Duplicate;
            }
            self.staged.insert(id, packet.authentic);
            self.polluted_accepted += u64::from(!packet.authentic);
            return ReceiveOutcome::New;
        }
        let verdict = match &self.ledger {
            Some(ledger) => classify(packet, ledger),
            // signatures or a genie check every packet on arrival
            None if packet.authentic => Verdict::Authentic,
            None => Verdict::Polluted,
        };
        match verdict {
            Verdict::Authentic => {
                if self.decode.insert(id) {
                    ReceiveOutcome::New
                } else {
                    ReceiveOutcome::Duplicate
                }
            }
            Verdict::Polluted => {
                self.polluted_dropped += 1;
                ReceiveOutcome::Dropped
            }
            Verdict::Unknown => {
                if (self.decode.contains(id) && packet.authentic) || self.quarantine.contains(packet) {
                    ReceiveOutcome::Duplicate
                } else if self.quarantine.len() < ctx.cfg.quarantine_capacity {
                    self.quarantine.push(*packet);
                    ReceiveOutcome::Quarantined
                } else {
                    ReceiveOutcome::Dropped
                }
            }
        }
    }

    fn attempt_decode(&mut self, ctx: &SchemeContext, slot: u64) {
        if self.is_decoded() {
            return;
        }
        let k = ctx.data_spec.k as usize;
        if self.staged.len() >= k {
            if self.staged.values().any(|&authentic| !authentic) {
                // whole-file signature check fails; nothing staged can be trusted
                self.failed_decodes += 1;
                self.staged.clear();
                return;
            }
            for (id, _) in std::mem::take(&mut self.staged) {
                self.decode.insert(id);
            }
        }
        if self.decode.try_decode(&ctx.data_spec) {
            self.decoded_at_slot = Some(slot);
            self.quarantine.clear();
        }
    }

    /// Records whether decoding relied on a relay-encoded packet, given the
    /// ids of all source nodes.
    pub fn note_decode_origin(&mut self, ctx: &SchemeContext, sources: &[u32]) {
        if self.decoded_via_relay.is_none() && self.is_decoded() && ctx.data_spec.precode == Precode::Rateless {
            let via_relay = self
                .decode
                .ids()
                .iter()
                .any(|&id| !sources.contains(&rateless_origin(id)));
            self.decoded_via_relay = Some(via_relay);
        }
    }
}

/// Free-function form of [`NodeState::select_transmission`].
pub fn select_transmission<R: Rng + ?Sized>(
    ctx: &SchemeContext,
    node: &mut NodeState,
    slot: u64,
    rng: &mut R,
) -> Option<CodedPacket> {
    node.select_transmission(ctx, slot, rng)
}

/// Free-function form of [`NodeState::on_receive`].
pub fn on_receive(ctx: &SchemeContext, node: &mut NodeState, packet: &CodedPacket, slot: u64) -> ReceiveOutcome {
    node.on_receive(ctx, packet, slot)
}

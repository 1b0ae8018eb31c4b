//! Hash-information packaging, packet verification and the pollution adversary.
//!
//! Hashes are not computed during simulation. A data packet carries a ground
//! truth authenticity flag, and a node can judge it once the hash-information
//! packet covering its id has arrived. Coded ids map onto hash-information
//! packets in contiguous blocks of `hashes_per_packet`.

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::coding::{coded_id_space, rateless_id, CodedId, CodedPacket, FileSpec, PacketKind, Precode};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OverheadConfig {
    pub signature_bytes: u32,
    pub hash_bytes: u32,
}

impl Default for OverheadConfig {
    fn default() -> Self {
        OverheadConfig {
            signature_bytes: 256,
            hash_bytes: 20,
        }
    }
}

impl OverheadConfig {
    pub fn validate(&self, spec: &FileSpec) -> Result<()> {
        if self.hash_bytes == 0 {
            return Err(Error::invalid("scheme.hash_bytes", "must be at least 1"));
        }
        if self.signature_bytes == 0 {
            return Err(Error::invalid("scheme.signature_bytes", "must be at least 1"));
        }
        if self.signature_bytes >= spec.packet_bytes {
            return Err(Error::SignatureTooLarge {
                packet_bytes: spec.packet_bytes,
                signature_bytes: self.signature_bytes,
            });
        }
        Ok(())
    }

    /// Payload bytes left in a packet after its signature.
    pub fn signed_payload_bytes(&self, spec: &FileSpec) -> Result<u32> {
        self.validate(spec)?;
        Ok(spec.packet_bytes - self.signature_bytes)
    }
}

/// Layout of the hash information for a fixed-rate precode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HashLayout {
    pub hashes_per_packet: u32,
    pub packet_count: u32,
}

impl HashLayout {
    /// Hash-information packets relative to the number of source packets.
    pub fn overhead_fraction(&self, spec: &FileSpec) -> f64 {
        f64::from(self.packet_count) / f64::from(spec.k)
    }

    /// Hash-information packet covering a data id.
    pub fn covering_packet(&self, id: CodedId) -> u32 {
        (id / u64::from(self.hashes_per_packet)) as u32
    }
}

/// Number of hashes that fit next to a signature, and the number of
/// hash-information packets needed to cover all `M·k` coded packets.
pub fn hash_packet_count(spec: &FileSpec, overhead: &OverheadConfig) -> Result<HashLayout> {
    let payload = overhead.signed_payload_bytes(spec)?;
    let hashes_per_packet = payload / overhead.hash_bytes;
    if hashes_per_packet == 0 {
        return Err(Error::invalid(
            "scheme.hash_bytes",
            "a single hash does not fit next to the signature",
        ));
    }
    let coded = coded_id_space(spec)?;
    let packet_count = coded.div_ceil(u64::from(hashes_per_packet)) as u32;
    Ok(HashLayout {
        hashes_per_packet,
        packet_count,
    })
}

/// Number of packets once every packet reserves room for its own signature.
pub fn signed_packet_count(file_bytes: u64, spec: &FileSpec, overhead: &OverheadConfig) -> Result<u32> {
    let payload = overhead.signed_payload_bytes(spec)?;
    Ok(file_bytes.div_ceil(u64::from(payload)) as u32)
}

/// Hash-information packets a node has collected.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashLedger {
    layout: HashLayout,
    received: Vec<bool>,
    count: u32,
}

impl HashLedger {
    pub fn new(layout: HashLayout) -> Self {
        HashLedger {
            layout,
            received: vec![false; layout.packet_count as usize],
            count: 0,
        }
    }

    /// Ledger already holding every hash-information packet.
    pub fn full(layout: HashLayout) -> Self {
        HashLedger {
            layout,
            received: vec![true; layout.packet_count as usize],
            count: layout.packet_count,
        }
    }

    pub fn layout(&self) -> HashLayout {
        self.layout
    }

    /// Records a hash-information packet, returning whether it was new.
    pub fn insert(&mut self, hash_id: u32) -> bool {
        match self.received.get_mut(hash_id as usize) {
            Some(slot) if !*slot => {
                *slot = true;
                self.count += 1;
                true
            }
            _ => false,
        }
    }

    pub fn contains(&self, hash_id: u32) -> bool {
        self.received.get(hash_id as usize).copied().unwrap_or(false)
    }

    pub fn covers(&self, id: CodedId) -> bool {
        self.contains(self.layout.covering_packet(id))
    }

    pub fn len(&self) -> u32 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn is_complete(&self) -> bool {
        self.count == self.layout.packet_count
    }

    /// Ids of the hash-information packets held, in ascending order.
    pub fn held(&self) -> impl Iterator<Item = u32> + '_ {
        self.received
            .iter()
            .enumerate()
            .filter(|(_, &held)| held)
            .map(|(i, _)| i as u32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Authentic,
    Polluted,
    /// Covering hash not received yet.
    Unknown,
}

/// Verdict of a precoded data packet against the hashes a node holds.
///
/// Hash-information and rateless packets are outside the hash scheme and
/// always come back `Unknown`.
pub fn classify(packet: &CodedPacket, ledger: &HashLedger) -> Verdict {
    match packet.kind {
        PacketKind::DataCoded(id) if ledger.covers(id) => {
            if packet.authentic {
                Verdict::Authentic
            } else {
                Verdict::Polluted
            }
        }
        _ => Verdict::Unknown,
    }
}

/// A polluted packet posing as a random coded packet.
///
/// For a rateless code the forged id is drawn from the adversary's own
/// `origin` namespace.
pub fn adversary_emit<R: Rng + ?Sized>(rng: &mut R, spec: &FileSpec, origin: u32) -> CodedPacket {
    match spec.precode {
        Precode::Fixed(m) => {
            let space = u64::from(m) * u64::from(spec.k);
            CodedPacket::data(rng.random_range(0..space), false, spec.packet_bytes)
        }
        Precode::Rateless => {
            let seq = rng.random_range(0..1u64 << 32);
            CodedPacket::rateless(rateless_id(origin, seq), false, spec.packet_bytes)
        }
    }
}

/// Deterministic stand-in payload for a coded packet.
pub fn synthetic_payload(id: CodedId, bytes: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(bytes);
    let mut counter = 0u64;
    while out.len() < bytes {
        let block = Sha256::new()
            .chain_update(id.to_le_bytes())
            .chain_update(counter.to_le_bytes())
            .finalize();
        out.extend_from_slice(&block);
        counter += 1;
    }
    out.truncate(bytes);
    out
}

/// SHA-256 digest truncated to `hash_bytes`.
pub fn truncated_digest(payload: &[u8], hash_bytes: usize) -> Vec<u8> {
    let full = Sha256::digest(payload);
    full[..hash_bytes.min(full.len())].to_vec()
}

/// Serializes one hash-information packet (signature placeholder followed by
/// the digests of the coded packets it covers) from synthetic payloads.
///
/// Used to check the byte arithmetic of [`hash_packet_count`] against real
/// digests; simulations never call it.
pub fn build_hash_info_packet(
    spec: &FileSpec,
    overhead: &OverheadConfig,
    hash_id: u32,
) -> Result<Vec<u8>> {
    let layout = hash_packet_count(spec, overhead)?;
    let space = coded_id_space(spec)?;
    let first = u64::from(hash_id) * u64::from(layout.hashes_per_packet);
    let last = (first + u64::from(layout.hashes_per_packet)).min(space);
    let mut bytes = vec![0u8; overhead.signature_bytes as usize];
    for id in first..last {
        let payload = synthetic_payload(id, spec.packet_bytes as usize);
        bytes.extend(truncated_digest(&payload, overhead.hash_bytes as usize));
    }
    if bytes.len() > spec.packet_bytes as usize {
        return Err(Error::invalid(
            "file.packet_bytes",
            format!("hash-information packet needs {} bytes", bytes.len()),
        ));
    }
    Ok(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(k: u32, m: u32) -> FileSpec {
        FileSpec::new(k, 1000, Precode::Fixed(m)).unwrap()
    }

    #[test]
    fn hash_layout_matches_reference_figures() {
        let o = OverheadConfig::default();
        let l3 = hash_packet_count(&spec(1000, 3), &o).unwrap();
        assert_eq!((l3.hashes_per_packet, l3.packet_count), (37, 82));
        let l4 = hash_packet_count(&spec(1000, 4), &o).unwrap();
        assert_eq!((l4.hashes_per_packet, l4.packet_count), (37, 109));
        assert_eq!((l4.overhead_fraction(&spec(1000, 4)) * 100.0).round(), 11.0);
        let small = hash_packet_count(&spec(37, 2), &o).unwrap();
        assert_eq!((small.hashes_per_packet, small.packet_count), (37, 2));
    }

    #[test]
    fn signature_must_fit() {
        let o = OverheadConfig {
            signature_bytes: 1000,
            hash_bytes: 20,
        };
        assert!(matches!(
            hash_packet_count(&spec(10, 3), &o),
            Err(Error::SignatureTooLarge { .. })
        ));
    }

    #[test]
    fn sign_every_packet_split() {
        let s = spec(1000, 3);
        // 10^6 / 744 = 1344.09, so the last packet is partly filled
        assert_eq!(signed_packet_count(1_000_000, &s, &OverheadConfig::default()).unwrap(), 1345);
    }

    #[test]
    fn classification() {
        let layout = hash_packet_count(&spec(1000, 3), &OverheadConfig::default()).unwrap();
        let full = HashLedger::full(layout);
        let empty = HashLedger::new(layout);
        let good = CodedPacket::data(5, true, 1000);
        let bad = CodedPacket::data(5, false, 1000);
        assert_eq!(classify(&good, &full), Verdict::Authentic);
        assert_eq!(classify(&bad, &full), Verdict::Polluted);
        assert_eq!(classify(&good, &empty), Verdict::Unknown);
        assert_eq!(classify(&bad, &empty), Verdict::Unknown);
    }

    #[test]
    fn partial_ledger_covers_contiguous_blocks() {
        let layout = hash_packet_count(&spec(1000, 3), &OverheadConfig::default()).unwrap();
        let mut ledger = HashLedger::new(layout);
        assert!(ledger.insert(1));
        assert!(!ledger.insert(1));
        assert!(!ledger.insert(10_000));
        assert_eq!(classify(&CodedPacket::data(36, true, 1000), &ledger), Verdict::Unknown);
        assert_eq!(classify(&CodedPacket::data(37, true, 1000), &ledger), Verdict::Authentic);
        assert_eq!(classify(&CodedPacket::data(73, false, 1000), &ledger), Verdict::Polluted);
        assert_eq!(classify(&CodedPacket::data(74, true, 1000), &ledger), Verdict::Unknown);
        assert!(!ledger.is_complete());
        for h in 0..layout.packet_count {
            ledger.insert(h);
        }
        assert!(ledger.is_complete());
        assert_eq!(ledger.held().count(), 82);
    }

    #[test]
    fn adversary_packets_are_always_caught() {
        let s = spec(1000, 3);
        let ledger = HashLedger::full(hash_packet_count(&s, &OverheadConfig::default()).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let p = adversary_emit(&mut rng, &s, 0);
            assert!(!p.authentic);
            assert!(p.data_id().unwrap() < 3000);
            assert_eq!(classify(&p, &ledger), Verdict::Polluted);
        }
    }

    #[test]
    fn real_digests_fit_the_layout() {
        let s = spec(1000, 3);
        let o = OverheadConfig::default();
        let packet = build_hash_info_packet(&s, &o, 0).unwrap();
        assert_eq!(packet.len(), 256 + 37 * 20);
        assert!(packet.len() <= 1000);
        // the last block is partial: 3000 - 81 * 37 = 3 hashes
        let last = build_hash_info_packet(&s, &o, 81).unwrap();
        assert_eq!(last.len(), 256 + 3 * 20);
    }
}

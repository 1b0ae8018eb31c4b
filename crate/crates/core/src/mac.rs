//! Slotted channel models.
//!
//! Two abstractions are provided. The CSMA/CA model elects a random maximal
//! set of transmitters no two of which sit within interference range of each
//! other, then delivers each broadcast packet to receivers in transmission
//! range that hear no other elected transmitter, subject to independent
//! erasures. The analytic model is the interference-free line channel in
//! which every node forwards one packet per slot to its downstream neighbor.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::coding::CodedPacket;
use crate::error::{Error, Result};
use crate::topology::{LineNetwork, Point};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadioConfig {
    pub tx_range_m: f64,
    /// Also used as the carrier-sense range.
    pub interference_range_m: f64,
    pub erasure_prob: f64,
    pub packets_per_slot: u32,
    pub slot_seconds: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            tx_range_m: 200.0,
            interference_range_m: 300.0,
            erasure_prob: 0.05,
            packets_per_slot: 20,
            slot_seconds: 1.0 / 3.0,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tx_range_m > 0.0) {
            return Err(Error::invalid("radio.tx_range", "must be positive"));
        }
        if !(self.interference_range_m >= self.tx_range_m) {
            return Err(Error::invalid(
                "radio.interference_range",
                "must be at least the transmission range",
            ));
        }
        if !(0.0..1.0).contains(&self.erasure_prob) {
            return Err(Error::invalid("radio.epsilon", "must lie in [0, 1)"));
        }
        if self.packets_per_slot == 0 {
            return Err(Error::invalid("radio.packets_per_slot", "must be at least 1"));
        }
        if !(self.slot_seconds > 0.0) {
            return Err(Error::invalid("radio.slot_seconds", "must be positive"));
        }
        Ok(())
    }

    /// Packet rate of an elected node, per second.
    pub fn packets_per_second(&self) -> f64 {
        f64::from(self.packets_per_slot) / self.slot_seconds
    }
}

/// Greedy random-order maximal independent set under the interference radius.
pub fn elect_transmitters<R: Rng + ?Sized>(
    rng: &mut R,
    contenders: &[usize],
    positions: &[Point],
    cfg: &RadioConfig,
) -> Vec<usize> {
    let mut order = contenders.to_vec();
    order.shuffle(rng);
    let mut elected: Vec<usize> = Vec::new();
    for c in order {
        let p = positions[c];
        if elected
            .iter()
            .all(|&e| positions[e].distance(&p) > cfg.interference_range_m)
        {
            elected.push(c);
        }
    }
    elected
}

/// Receivers among `receivers` that can decode `tx` this slot before erasures:
/// within transmission range of `tx`, not transmitting themselves, and beyond
/// interference range of every other elected transmitter.
pub fn audible_receivers(
    tx: usize,
    receivers: &[usize],
    positions: &[Point],
    elected: &[usize],
    cfg: &RadioConfig,
) -> Vec<usize> {
    let origin = positions[tx];
    receivers
        .iter()
        .copied()
        .filter(|&r| {
            r != tx
                && !elected.contains(&r)
                && positions[r].distance(&origin) <= cfg.tx_range_m
                && elected.iter().all(|&e| {
                    e == tx || positions[e].distance(&positions[r]) > cfg.interference_range_m
                })
        })
        .collect()
}

/// Receivers that get one broadcast packet of `tx`, erasures drawn
/// independently per receiver.
pub fn deliver<R: Rng + ?Sized>(
    tx: usize,
    receivers: &[usize],
    positions: &[Point],
    elected: &[usize],
    cfg: &RadioConfig,
    rng: &mut R,
) -> Vec<usize> {
    audible_receivers(tx, receivers, positions, elected, cfg)
        .into_iter()
        .filter(|_| rng.random::<f64>() >= cfg.erasure_prob)
        .collect()
}

/// For every node, the elected transmitter it hears this slot, if any: the
/// transmitter must lie within transmission range and be the only elected
/// node within interference range. Equivalent to [`audible_receivers`] over
/// all nodes, in one pass.
pub fn reception_map(positions: &[Point], elected: &[usize], cfg: &RadioConfig) -> Vec<Option<usize>> {
    let mut heard = vec![None; positions.len()];
    for (r, slot) in heard.iter_mut().enumerate() {
        if elected.contains(&r) {
            continue;
        }
        let mut only = None;
        let mut count = 0;
        for &e in elected {
            let d = positions[e].distance(&positions[r]);
            if d <= cfg.interference_range_m {
                count += 1;
                if d <= cfg.tx_range_m {
                    only = Some(e);
                }
            }
        }
        if count == 1 {
            *slot = only;
        }
    }
    heard
}

/// Outcome on the edge `i-1 → i` of a line network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeOutcome {
    /// Upstream node had nothing to send.
    Idle,
    Erased,
    Delivered(CodedPacket),
}

/// One slot of the analytic line channel. `outgoing[i]` is the packet node `i`
/// sends downstream; entry `i` of the result is what node `i` receives
/// (entry 0, the source, is always `Idle`).
pub fn analytic_mac_step<R: Rng + ?Sized>(
    line: &LineNetwork,
    outgoing: &[Option<CodedPacket>],
    erasure_prob: f64,
    rng: &mut R,
) -> Result<Vec<EdgeOutcome>> {
    if outgoing.len() != line.len() {
        return Err(Error::TopologyMismatch(format!(
            "{} transmissions for a line of {} nodes",
            outgoing.len(),
            line.len()
        )));
    }
    let mut out = Vec::with_capacity(line.len());
    out.push(EdgeOutcome::Idle);
    for sent in &outgoing[..line.len() - 1] {
        out.push(match sent {
            None => EdgeOutcome::Idle,
            Some(p) => {
                if rng.random::<f64>() < erasure_prob {
                    EdgeOutcome::Erased
                } else {
                    EdgeOutcome::Delivered(*p)
                }
            }
        });
    }
    Ok(out)
}

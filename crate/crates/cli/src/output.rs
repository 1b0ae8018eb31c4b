//! CSV emission. Every writer produces a header row followed by one row per
//! record, with fixed column order and number formatting.

use std::fmt::Write as _;

use crlflood::engine::Metrics;

/// `slot,seconds,fraction_decoded`, one row per simulated slot.
pub fn fraction_csv(m: &Metrics) -> String {
    let mut s = String::from("slot,seconds,fraction_decoded\n");
    for (i, f) in m.fraction_decoded.iter().enumerate() {
        let slot = i as u64 + 1;
        let _ = writeln!(s, "{slot},{:.6},{f:.6}", slot as f64 * m.slot_seconds);
    }
    s
}

/// `node,decoded_slot,useful_tx,wasted_tx`; undecoded nodes leave the slot empty.
pub fn nodes_csv(m: &Metrics) -> String {
    let mut s = String::from("node,decoded_slot,useful_tx,wasted_tx\n");
    for i in 0..m.roles.len() {
        let slot = m.decode_slot[i].map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{i},{slot},{},{}", m.useful_tx[i], m.wasted_tx[i]);
    }
    s
}

/// `hop,T_n_slots,H_next_fraction` for a line network; the last hop has no
/// successor and leaves the fraction empty.
pub fn line_csv(m: &Metrics) -> String {
    let mut s = String::from("hop,T_n_slots,H_next_fraction\n");
    for (n, t) in m.hop_delay.iter().enumerate() {
        let t = t.map(|v| v.to_string()).unwrap_or_default();
        let h = m
            .next_hop_fill
            .get(n)
            .copied()
            .flatten()
            .map(|v| format!("{v:.6}"))
            .unwrap_or_default();
        let _ = writeln!(s, "{},{t},{h}", n + 1);
    }
    s
}

/// `slot,seconds,<scheme>...`: fraction decoded of several runs side by side.
/// Shorter runs are held at their final value.
pub fn compare_csv(names: &[String], runs: &[&Metrics]) -> String {
    let mut s = String::from("slot,seconds");
    for n in names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    let slots = runs.iter().map(|m| m.fraction_decoded.len()).max().unwrap_or(0);
    let secs = runs.first().map(|m| m.slot_seconds).unwrap_or(1.0);
    for i in 0..slots {
        let slot = i as u64 + 1;
        let _ = write!(s, "{slot},{:.6}", slot as f64 * secs);
        for m in runs {
            let f = m
                .fraction_decoded
                .get(i)
                .or(m.fraction_decoded.last())
                .copied()
                .unwrap_or(0.0);
            let _ = write!(s, ",{f:.6}");
        }
        s.push('\n');
    }
    s
}

use std::collections::HashSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crlflood::analysis::{h_inf_for_t, monotonicity_check, solve_tf, theorem1_bound, InverseRate};
use crlflood::coding::{coded_id_space, sample_full_space, DecodeState, FileSpec, Precode};
use crlflood::mac::{elect_transmitters, RadioConfig};
use crlflood::schemes::{NodeState, Role, SchemeConfig, SchemeContext, SchemeKind};
use crlflood::security::{classify, hash_packet_count, HashLedger, OverheadConfig, Verdict};
use crlflood::topology::{build_grid, Point, RoadGraph};
use crlflood::{run, CodedPacket, PacketKind, RunConfig};

fn precoded(k: u32, m: u32) -> FileSpec {
    FileSpec::new(k, 1000, Precode::Fixed(m)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decoded_exactly_at_k_distinct_ids(k in 1u32..200, ids in prop::collection::vec(0u64..600, 0..400)) {
        let spec = precoded(k, 3);
        let mut d = DecodeState::new();
        let mut seen = HashSet::new();
        for id in ids {
            d.insert(id);
            seen.insert(id);
            prop_assert_eq!(d.try_decode(&spec), seen.len() >= k as usize);
        }
    }

    #[test]
    fn full_space_samples_stay_in_range(k in 1u32..500, m in 2u32..8, seed: u64) {
        let spec = precoded(k, m);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = coded_id_space(&spec).unwrap();
        for _ in 0..50 {
            prop_assert!(sample_full_space(&mut rng, &spec).unwrap() < space);
        }
    }

    #[test]
    fn hash_layout_covers_every_id_tightly(k in 1u32..5000, m in 2u32..10, sig in 1u32..900, hash in 1u32..50) {
        let spec = precoded(k, m);
        let o = OverheadConfig { signature_bytes: sig, hash_bytes: hash };
        if let Ok(l) = hash_packet_count(&spec, &o) {
            let ids = u64::from(k) * u64::from(m);
            let per = u64::from(l.hashes_per_packet);
            prop_assert!(u64::from(l.packet_count) * per >= ids);
            prop_assert!(u64::from(l.packet_count - 1) * per < ids);
        }
    }

    #[test]
    fn classification_is_sound(ids in prop::collection::vec((0u64..3000, any::<bool>()), 1..100),
                               held in prop::collection::vec(0u32..82, 0..82)) {
        let spec = precoded(1000, 3);
        let layout = hash_packet_count(&spec, &OverheadConfig::default()).unwrap();
        let mut ledger = HashLedger::new(layout);
        for h in &held {
            ledger.insert(*h);
        }
        let full = HashLedger::full(layout);
        for (id, authentic) in ids {
            let p = CodedPacket::data(id, authentic, 1000);
            let want = if authentic { Verdict::Authentic } else { Verdict::Polluted };
            prop_assert_eq!(classify(&p, &full), want);
            let v = classify(&p, &ledger);
            if ledger.covers(id) {
                prop_assert_eq!(v, want);
            } else {
                prop_assert_eq!(v, Verdict::Unknown);
            }
        }
    }

    #[test]
    fn grid_rows_are_stochastic(rows in 2usize..7, cols in 2usize..7, bias in 0.0f64..=1.0) {
        let g = build_grid(rows, cols, 100.0, bias).unwrap();
        for i in 0..g.len() {
            let s: f64 = g.row(i).iter().map(|(_, p)| p).sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }
        let back = RoadGraph::parse(&g.to_text()).unwrap();
        prop_assert_eq!(back.len(), g.len());
        let pi = g.stationary_distribution(1e-12, 100_000);
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn elected_sets_are_maximal_independent(pts in prop::collection::vec((0.0f64..1500.0, 0.0f64..1500.0), 1..80), seed: u64) {
        let pos: Vec<Point> = pts.iter().map(|&(x, y)| Point::new(x, y)).collect();
        let all: Vec<usize> = (0..pos.len()).collect();
        let cfg = RadioConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = elect_transmitters(&mut rng, &all, &pos, &cfg);
        for (n, &a) in e.iter().enumerate() {
            for &b in &e[n + 1..] {
                prop_assert!(pos[a].distance(&pos[b]) > cfg.interference_range_m);
            }
        }
        for i in all.iter().filter(|i| !e.contains(i)) {
            prop_assert!(e.iter().any(|&w| pos[w].distance(&pos[*i]) <= cfg.interference_range_m));
        }
    }

    #[test]
    fn extremal_point_solves_its_equation(m in 2.0f64..1e4) {
        let mr = InverseRate::Finite(m);
        let s = solve_tf(mr, 1e-12).unwrap();
        prop_assert!((-s.tf.ln() - (1.0 - s.tf / m)).abs() < 1e-9);
        prop_assert!(s.tf >= m / (m * std::f64::consts::E - 1.0) - 1e-12);
        prop_assert!(s.tf > (-1.0f64).exp());
        let bigger = solve_tf(InverseRate::Finite(m * 1.5), 1e-12).unwrap();
        prop_assert!(bigger.tf < s.tf);
    }

    #[test]
    fn limit_buffer_inverts_round_time(m in 2.0f64..50.0, frac in 0.05f64..1.0) {
        let mr = InverseRate::Finite(m);
        let tf = solve_tf(mr, 1e-12).unwrap().tf;
        let t = frac * tf;
        let h = h_inf_for_t(mr, t).unwrap();
        prop_assert!(h >= tf - 1e-12 && h <= 1.0);
        prop_assert!((-h * h.ln() / (1.0 - h / m) - t).abs() < 1e-9);
    }

    #[test]
    fn delay_bound_grows_with_hops(m in 2.0f64..100.0, n in 1u32..200) {
        let mr = InverseRate::Finite(m);
        prop_assert!(theorem1_bound(n + 1, mr).unwrap() > theorem1_bound(n, mr).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ordered_starts_stay_ordered(raw in prop::collection::vec((0.0f64..0.99, 0.0f64..1.0), 2..6), m_idx in 0usize..3) {
        let m = [InverseRate::Finite(2.0), InverseRate::Finite(3.0), InverseRate::Infinite][m_idx];
        let mut a: Vec<f64> = raw.iter().map(|r| r.0).collect();
        a.sort_by(|x, y| y.total_cmp(x));
        let mut b: Vec<f64> = a.iter().zip(&raw).map(|(x, r)| x * r.1).collect();
        b.sort_by(|x, y| y.total_cmp(x));
        prop_assert!(monotonicity_check(m, &a, &b, 2.0, 2e-3).unwrap());
    }

    #[test]
    fn line_transmissions_are_all_accounted(d in 2usize..6, k in 5u32..60, eps in 0.0f64..0.5, seed: u64) {
        let mut cfg = RunConfig::line(d, precoded(k, 3), eps, seed);
        cfg.record_buffers = true;
        let m = run(&cfg).unwrap();
        // each useful delivery adds one packet to some relay buffer
        let held: u64 = m.buffer_trace.as_ref().map_or(0, |t| t.last().unwrap()[1..].iter().map(|&x| u64::from(x)).sum());
        prop_assert_eq!(m.total_useful(), held);
        // every hop decodes, and in order
        let t: Vec<u64> = m.hop_delay.iter().map(|x| x.unwrap()).collect();
        prop_assert!(t.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(t[0] >= k as u64);
        prop_assert_eq!(run(&cfg).unwrap(), m);
    }

    #[test]
    fn honest_relays_forward_only_verified_packets(
        events in prop::collection::vec((0u8..4, 0u64..3000, 0u32..82), 1..300),
        seed: u64,
        kind_idx in 0usize..2,
    ) {
        let kind = [SchemeKind::PrecodeAndHash, SchemeKind::ProportionalForwarding][kind_idx];
        let spec = precoded(1000, 3);
        let ctx = SchemeContext::new(
            SchemeConfig::with_kind(kind), &spec, OverheadConfig::default(), &RadioConfig::default(), false,
        ).unwrap();
        let mut node = NodeState::new(9, Role::Relay, &ctx);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hashes = HashSet::new();
        let mut authentic = HashSet::new();
        for (slot, (what, id, h)) in events.into_iter().enumerate() {
            let slot = slot as u64;
            match what {
                0 => {
                    hashes.insert(h);
                    node.on_receive(&ctx, &CodedPacket::hash_info(h, 1000), slot);
                }
                1 => {
                    authentic.insert(id);
                    node.on_receive(&ctx, &CodedPacket::data(id, true, 1000), slot);
                }
                2 => {
                    node.on_receive(&ctx, &CodedPacket::data(id, false, 1000), slot);
                }
                _ => {
                    for p in node.select_batch(&ctx, slot, 20, &mut rng) {
                        match p.kind {
                            PacketKind::HashInfo(h) => prop_assert!(hashes.contains(&h)),
                            PacketKind::DataCoded(id) => {
                                prop_assert!(p.authentic);
                                prop_assert!(authentic.contains(&id));
                                prop_assert!(hashes.contains(&((id / 37) as u32)));
                            }
                            PacketKind::RatelessCoded(_) => prop_assert!(false, "rateless packet from a precode relay"),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn sign_every_packet_relays_never_originate(
        ids in prop::collection::vec(0u64..5000, 1..200),
        seed: u64,
    ) {
        let spec = FileSpec::new(1000, 1000, Precode::Rateless).unwrap();
        let ctx = SchemeContext::new(
            SchemeConfig::with_kind(SchemeKind::SignEveryPacket), &spec, OverheadConfig::default(), &RadioConfig::default(), false,
        ).unwrap();
        let mut node = NodeState::new(3, Role::Relay, &ctx);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut got = HashSet::new();
        for (slot, id) in ids.into_iter().enumerate() {
            got.insert(id);
            node.on_receive(&ctx, &CodedPacket::rateless(id, true, 1000), slot as u64);
            for p in node.select_batch(&ctx, slot as u64, 20, &mut rng) {
                prop_assert!(got.contains(&p.data_id().unwrap()));
            }
        }
    }

    #[test]
    fn wait_to_decode_relays_stay_silent_until_decoded(ids in prop::collection::vec(0u64..100_000, 1..500), seed: u64) {
        let spec = FileSpec::new(1000, 1000, Precode::Rateless).unwrap();
        let ctx = SchemeContext::new(
            SchemeConfig::with_kind(SchemeKind::WaitToDecode), &spec, OverheadConfig::default(), &RadioConfig::default(), false,
        ).unwrap();
        let mut node = NodeState::new(3, Role::Relay, &ctx);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (slot, id) in ids.into_iter().enumerate() {
            node.on_receive(&ctx, &CodedPacket::rateless(id, true, 1000), slot as u64);
            prop_assert!(node.is_decoded() || node.select_batch(&ctx, slot as u64, 20, &mut rng).is_empty());
        }
    }
}

//! Slotted simulation loop.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::coding::FileSpec;
use crate::error::{Error, Result};
use crate::mac::{analytic_mac_step, elect_transmitters, reception_map, EdgeOutcome, RadioConfig};
use crate::schemes::{seeding_schedule, NodeState, ReceiveOutcome, Role, SchemeConfig, SchemeContext};
use crate::security::OverheadConfig;
use crate::topology::{build_grid, build_line, place_vehicles, step_mobility, Point, RoadGraph, VehicleState};

/// Independent random streams of one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Mobility = 1,
    Mac = 2,
    Scheme = 3,
    Channel = 4,
    Adversary = 5,
}

pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub enum MapSource {
    Grid {
        rows: usize,
        cols: usize,
        block_m: f64,
        turn_bias: f64,
    },
    Graph(RoadGraph),
}

#[derive(Clone, Debug, PartialEq)]
pub struct UrbanConfig {
    pub map: MapSource,
    pub vehicles: usize,
    /// Static source positions in meters.
    pub sources: Vec<Point>,
    pub speed_min: f64,
    pub speed_max: f64,
}

impl Default for UrbanConfig {
    fn default() -> Self {
        UrbanConfig::grid(10, 10, DEFAULT_BLOCK_M, 0.5)
    }
}

impl UrbanConfig {
    /// Grid map with four sources at the intersections a fifth of the way in
    /// from each corner; for a 10 x 10 grid these are (2,2), (2,7), (7,2), (7,7).
    pub fn grid(rows: usize, cols: usize, block_m: f64, turn_bias: f64) -> Self {
        let near = |n: usize| (0.2 * n.saturating_sub(1) as f64).round();
        let far = |n: usize| n.saturating_sub(1) as f64 - near(n);
        let at = |r: f64, c: f64| Point::new(c * block_m, r * block_m);
        UrbanConfig {
            map: MapSource::Grid {
                rows,
                cols,
                block_m,
                turn_bias,
            },
            vehicles: 236,
            sources: vec![
                at(near(rows), near(cols)),
                at(near(rows), far(cols)),
                at(far(rows), near(cols)),
                at(far(rows), far(cols)),
            ],
            speed_min: 15.0,
            speed_max: 25.0,
        }
    }
}

pub const DEFAULT_BLOCK_M: f64 = 300.0;

#[derive(Clone, Debug, PartialEq)]
pub enum Topology {
    /// Source at node 0, analytic channel.
    Line { d: usize },
    /// Vehicles on a road graph, CSMA channel.
    Urban(UrbanConfig),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub topology: Topology,
    pub radio: RadioConfig,
    pub file: FileSpec,
    pub scheme: SchemeConfig,
    pub overhead: OverheadConfig,
    /// Share of relays (vehicles) that behave maliciously.
    pub malicious_fraction: f64,
    pub horizon_slots: u64,
    pub seed: u64,
    /// Keep per-slot buffer sizes of every node.
    pub record_buffers: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            topology: Topology::Urban(UrbanConfig::default()),
            radio: RadioConfig::default(),
            file: FileSpec::new(1000, 1000, crate::coding::Precode::Fixed(3)).expect("default file is valid"),
            scheme: SchemeConfig::default(),
            overhead: OverheadConfig::default(),
            malicious_fraction: 0.05,
            horizon_slots: 1_000_000,
            seed: 0,
            record_buffers: false,
        }
    }
}

impl RunConfig {
    /// Analytic line network of `d` nodes with preloaded hash information
    /// and no adversaries.
    pub fn line(d: usize, file: FileSpec, erasure_prob: f64, seed: u64) -> Self {
        RunConfig {
            topology: Topology::Line { d },
            malicious_fraction: 0.0,
            radio: RadioConfig {
                erasure_prob,
                ..RadioConfig::default()
            },
            file,
            seed,
            ..RunConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon_slots == 0 {
            return Err(Error::invalid("horizon_slots", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.malicious_fraction) {
            return Err(Error::invalid("adversary.fraction", "must lie in [0, 1)"));
        }
        self.radio.validate()?;
        self.file.validate()?;
        self.scheme.validate()?;
        self.overhead.validate(&self.file)?;
        match &self.topology {
            Topology::Line { d } => {
                build_line(*d)?;
            }
            Topology::Urban(u) => {
                if u.vehicles == 0 {
                    return Err(Error::invalid("topology.vehicles", "must be at least 1"));
                }
                if u.sources.is_empty() {
                    return Err(Error::invalid("topology.sources", "need at least one source"));
                }
                if !(u.speed_min > 0.0 && u.speed_max >= u.speed_min) {
                    return Err(Error::invalid("topology.speed", "need 0 < speed_min <= speed_max"));
                }
                if let MapSource::Graph(g) = &u.map {
                    g.validate()?;
                }
            }
        }
        Ok(())
    }

    fn context(&self) -> Result<SchemeContext> {
        let line = matches!(self.topology, Topology::Line { .. });
        let ctx = SchemeContext::new(self.scheme, &self.file, self.overhead, &self.radio, line)?;
        Ok(if line {
            ctx
        } else {
            ctx.with_seeding(Some(seeding_schedule(&self.file, &self.scheme, &self.radio).slots))
        })
    }
}

/// Outcome of one run. Slots are counted from 1: a node decoding during the
/// first slot has `decode_slot = Some(1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub roles: Vec<Role>,
    pub decode_slot: Vec<Option<u64>>,
    /// Share of honest relays decoded after each slot.
    pub fraction_decoded: Vec<f64>,
    pub useful_tx: Vec<u64>,
    pub wasted_tx: Vec<u64>,
    pub failed_decodes: Vec<u64>,
    pub polluted_accepted: Vec<u64>,
    /// For rateless schemes, whether a node's decoding set held a relay-encoded packet.
    pub decoded_via_relay: Vec<Option<bool>>,
    /// Line networks: `T_n` for `n = 1..d-1`.
    pub hop_delay: Vec<Option<u64>>,
    /// Line networks: `|H_{n+1}(T_n)| / (k-1)` for `n = 1..d-2`.
    pub next_hop_fill: Vec<Option<f64>>,
    /// Buffer sizes before the first slot and after every slot, if recorded.
    pub buffer_trace: Option<Vec<Vec<u32>>>,
    pub slots_run: u64,
    pub slot_seconds: f64,
    /// Decode threshold of the scheme that ran.
    pub k: u32,
}

impl Metrics {
    fn honest_relays(&self) -> impl Iterator<Item = usize> + '_ {
        self.roles.iter().enumerate().filter(|(_, r)| **r == Role::Relay).map(|(i, _)| i)
    }

    pub fn final_fraction(&self) -> f64 {
        self.fraction_decoded.last().copied().unwrap_or(0.0)
    }

    /// First slot by which at least `q` of the honest relays have decoded.
    pub fn quantile_slot(&self, q: f64) -> Option<u64> {
        self.fraction_decoded
            .iter()
            .position(|&f| f >= q - 1e-12)
            .map(|i| i as u64 + 1)
    }

    pub fn median_decode_slot(&self) -> Option<u64> {
        self.quantile_slot(0.5)
    }

    /// Slot at which the last honest relay decoded.
    pub fn completion_slot(&self) -> Option<u64> {
        self.honest_relays()
            .map(|i| self.decode_slot[i])
            .try_fold(0, |acc, s| s.map(|s| acc.max(s)))
    }

    pub fn relay_encoded_decodes(&self) -> usize {
        self.decoded_via_relay.iter().filter(|v| **v == Some(true)).count()
    }

    pub fn total_useful(&self) -> u64 {
        self.useful_tx.iter().sum()
    }

    pub fn total_wasted(&self) -> u64 {
        self.wasted_tx.iter().sum()
    }
}

struct Recorder {
    metrics: Metrics,
}

impl Recorder {
    fn new(nodes: &[NodeState], ctx: &SchemeContext, cfg: &RunConfig, line_hops: usize) -> Self {
        let n = nodes.len();
        Recorder {
            metrics: Metrics {
                roles: nodes.iter().map(|s| s.role).collect(),
                decode_slot: vec![None; n],
                fraction_decoded: Vec::new(),
                useful_tx: vec![0; n],
                wasted_tx: vec![0; n],
                failed_decodes: vec![0; n],
                polluted_accepted: vec![0; n],
                decoded_via_relay: vec![None; n],
                hop_delay: vec![None; line_hops],
                next_hop_fill: vec![None; line_hops.saturating_sub(1)],
                buffer_trace: cfg.record_buffers.then(|| vec![buffers(nodes)]),
                slots_run: 0,
                slot_seconds: cfg.radio.slot_seconds,
                k: ctx.data_spec.k,
            },
        }
    }

    fn account(&mut self, sender: usize, outcome: ReceiveOutcome) {
        if outcome == ReceiveOutcome::New {
            self.metrics.useful_tx[sender] += 1;
        } else {
            self.metrics.wasted_tx[sender] += 1;
        }
    }

    /// Closes a slot; returns whether every honest relay has decoded.
    fn end_slot(&mut self, nodes: &mut [NodeState], ctx: &SchemeContext, sources: &[u32], slot: u64) -> bool {
        let m = &mut self.metrics;
        let mut relays = 0usize;
        let mut decoded = 0usize;
        for (i, node) in nodes.iter_mut().enumerate() {
            if node.role != Role::Relay {
                continue;
            }
            relays += 1;
            if node.is_decoded() {
                decoded += 1;
                if m.decode_slot[i].is_none() {
                    m.decode_slot[i] = Some(slot + 1);
                    node.note_decode_origin(ctx, sources);
                    m.decoded_via_relay[i] = node.decoded_via_relay;
                }
            }
        }
        let frac = if relays == 0 { 1.0 } else { decoded as f64 / relays as f64 };
        m.fraction_decoded.push(frac);
        m.slots_run = slot + 1;
        if let Some(trace) = m.buffer_trace.as_mut() {
            trace.push(buffers(nodes));
        }
        decoded == relays
    }

    fn finish(mut self, nodes: &[NodeState]) -> Metrics {
        for (i, n) in nodes.iter().enumerate() {
            self.metrics.failed_decodes[i] = n.failed_decodes;
            self.metrics.polluted_accepted[i] = n.polluted_accepted;
        }
        self.metrics
    }
}

fn buffers(nodes: &[NodeState]) -> Vec<u32> {
    nodes.iter().map(|n| n.held() as u32).collect()
}

/// Picks `round(fraction · candidates)` malicious relays.
fn assign_adversaries(roles: &mut [Role], candidates: &[usize], fraction: f64, rng: &mut ChaCha8Rng) {
    let count = ((fraction * candidates.len() as f64).round() as usize).min(candidates.len());
    for idx in sample(rng, candidates.len(), count) {
        roles[candidates[idx]] = Role::Malicious;
    }
}

/// Runs one simulation. Deterministic in `config`, seed included.
pub fn run(config: &RunConfig) -> Result<Metrics> {
    config.validate()?;
    let ctx = config.context()?;
    match &config.topology {
        Topology::Line { d } => run_line(config, &ctx, *d),
        Topology::Urban(u) => run_urban(config, &ctx, u),
    }
}

fn run_line(config: &RunConfig, ctx: &SchemeContext, d: usize) -> Result<Metrics> {
    let line = build_line(d)?;
    let mut adversary = substream(config.seed, Stream::Adversary);
    let mut scheme_rng = substream(config.seed, Stream::Scheme);
    let mut channel = substream(config.seed, Stream::Channel);

    let mut roles = vec![Role::Relay; d];
    roles[0] = Role::Source;
    let relays: Vec<usize> = (1..d).collect();
    assign_adversaries(&mut roles, &relays, config.malicious_fraction, &mut adversary);
    let mut nodes: Vec<NodeState> = roles
        .iter()
        .enumerate()
        .map(|(i, &r)| NodeState::new(i as u32, r, ctx))
        .collect();
    let mut rec = Recorder::new(&nodes, ctx, config, d - 1);
    let mut outgoing = vec![None; d];

    for slot in 0..config.horizon_slots {
        for i in 0..d - 1 {
            let rng = if nodes[i].role == Role::Malicious {
                &mut adversary
            } else {
                &mut scheme_rng
            };
            outgoing[i] = nodes[i].select_transmission(ctx, slot, rng);
        }
        let received = analytic_mac_step(&line, &outgoing, config.radio.erasure_prob, &mut channel)?;
        for (i, edge) in received.iter().enumerate() {
            match edge {
                EdgeOutcome::Delivered(p) => {
                    let outcome = nodes[i].on_receive(ctx, p, slot);
                    rec.account(i - 1, outcome);
                }
                EdgeOutcome::Erased => rec.metrics.wasted_tx[i - 1] += 1,
                EdgeOutcome::Idle => {}
            }
        }
        let done = rec.end_slot(&mut nodes, ctx, &[0], slot);
        for n in 1..d {
            if rec.metrics.hop_delay[n - 1].is_none() && nodes[n].is_decoded() {
                rec.metrics.hop_delay[n - 1] = Some(slot + 1);
                if n + 1 < d {
                    let k = f64::from(ctx.data_spec.k);
                    rec.metrics.next_hop_fill[n - 1] = Some(nodes[n + 1].held() as f64 / (k - 1.0).max(1.0));
                }
            }
        }
        if done {
            break;
        }
    }
    Ok(rec.finish(&nodes))
}

fn run_urban(config: &RunConfig, ctx: &SchemeContext, urban: &UrbanConfig) -> Result<Metrics> {
    let graph = match &urban.map {
        MapSource::Grid {
            rows,
            cols,
            block_m,
            turn_bias,
        } => build_grid(*rows, *cols, *block_m, *turn_bias)?,
        MapSource::Graph(g) => g.clone(),
    };
    let mut mobility = substream(config.seed, Stream::Mobility);
    let mut mac = substream(config.seed, Stream::Mac);
    let mut scheme_rng = substream(config.seed, Stream::Scheme);
    let mut channel = substream(config.seed, Stream::Channel);
    let mut adversary = substream(config.seed, Stream::Adversary);

    let s = urban.sources.len();
    let mut vehicles: Vec<VehicleState> =
        place_vehicles(&graph, urban.vehicles, urban.speed_min, urban.speed_max, &mut mobility);
    let mut roles = vec![Role::Relay; s + urban.vehicles];
    roles[..s].fill(Role::Source);
    let relays: Vec<usize> = (s..roles.len()).collect();
    assign_adversaries(&mut roles, &relays, config.malicious_fraction, &mut adversary);
    let mut nodes: Vec<NodeState> = roles
        .iter()
        .enumerate()
        .map(|(i, &r)| NodeState::new(i as u32, r, ctx))
        .collect();
    let source_ids: Vec<u32> = (0..s as u32).collect();
    let source_batch = (ctx.cfg.seeding_rate_pps * config.radio.slot_seconds).round().max(1.0) as u32;

    let mut positions: Vec<Point> = urban.sources.clone();
    positions.extend(vehicles.iter().map(|v| v.position(&graph)));
    let mut rec = Recorder::new(&nodes, ctx, config, 0);
    let mut contenders = Vec::with_capacity(nodes.len());

    for slot in 0..config.horizon_slots {
        contenders.clear();
        contenders.extend((0..nodes.len()).filter(|&i| nodes[i].has_send_intent(ctx, slot)));
        let elected = elect_transmitters(&mut mac, &contenders, &positions, &config.radio);
        let batches: Vec<Vec<_>> = elected
            .iter()
            .map(|&e| {
                let count = if nodes[e].role == Role::Source {
                    source_batch
                } else {
                    config.radio.packets_per_slot
                };
                let rng = if nodes[e].role == Role::Malicious {
                    &mut adversary
                } else {
                    &mut scheme_rng
                };
                nodes[e].select_batch(ctx, slot, count, rng)
            })
            .collect();
        let heard = reception_map(&positions, &elected, &config.radio);
        for (r, tx) in heard.iter().enumerate() {
            let Some(tx) = *tx else { continue };
            let batch = &batches[elected.iter().position(|&e| e == tx).expect("heard an elected node")];
            for p in batch {
                if rand::Rng::random::<f64>(&mut channel) < config.radio.erasure_prob {
                    rec.metrics.wasted_tx[tx] += 1;
                    continue;
                }
                let outcome = nodes[r].on_receive(ctx, p, slot);
                rec.account(tx, outcome);
            }
        }
        if rec.end_slot(&mut nodes, ctx, &source_ids, slot) {
            break;
        }
        step_mobility(&mut vehicles, &graph, config.radio.slot_seconds, &mut mobility);
        for (p, v) in positions[s..].iter_mut().zip(&vehicles) {
            *p = v.position(&graph);
        }
    }
    Ok(rec.finish(&nodes))
}

/// Mean and sample standard deviation of completion slots across replications.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub runs: Vec<Metrics>,
    pub completed: usize,
    pub mean_completion: Option<f64>,
    pub std_completion: Option<f64>,
}

pub fn summarize(runs: Vec<Metrics>) -> SweepSummary {
    let done: Vec<f64> = runs.iter().filter_map(|m| m.completion_slot()).map(|s| s as f64).collect();
    let n = done.len();
    let mean = (n > 0).then(|| done.iter().sum::<f64>() / n as f64);
    let std = mean.filter(|_| n > 1).map(|mu| {
        (done.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1) as f64).sqrt()
    });
    SweepSummary {
        runs,
        completed: n,
        mean_completion: mean,
        std_completion: std,
    }
}

/// Runs every config with seeds `seed + 0 .. seed + replication - 1`, in parallel
/// on the current rayon pool.
pub fn sweep(configs: &[RunConfig], replication: u32) -> Result<Vec<SweepSummary>> {
    if replication == 0 {
        return Err(Error::invalid("replication", "must be at least 1"));
    }
    let jobs: Vec<(usize, RunConfig)> = configs
        .iter()
        .enumerate()
        .flat_map(|(i, c)| {
            (0..u64::from(replication)).map(move |r| {
                let mut c = c.clone();
                c.seed = c.seed.wrapping_add(r);
                (i, c)
            })
        })
        .collect();
    let results: Vec<(usize, Metrics)> = jobs
        .into_par_iter()
        .map(|(i, c)| run(&c).map(|m| (i, m)))
        .collect::<Result<_>>()?;
    let mut grouped: Vec<Vec<Metrics>> = vec![Vec::new(); configs.len()];
    for (i, m) in results {
        grouped[i].push(m);
    }
    Ok(grouped.into_iter().map(summarize).collect())
}

//! Static line networks and a synthetic urban road grid with Markov mobility.
//!
//! Vehicles drive along directed road segments. At the end of a segment the
//! next one is drawn from the row of a row-stochastic transition matrix `P`
//! indexed by segments, so `P[i][j] > 0` only where segment `j` starts at the
//! intersection where segment `i` ends.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};

/// Row sums of `P` must match 1 within this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-9;
/// Endpoints closer than this (meters) are the same intersection.
const JOIN_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// `d` static nodes on a line; node 0 is the source.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LineNetwork {
    d: usize,
}

pub fn build_line(d: usize) -> Result<LineNetwork> {
    if d < 2 {
        return Err(Error::invalid("topology.nodes", "a line needs at least 2 nodes"));
    }
    Ok(LineNetwork { d })
}

impl LineNetwork {
    pub fn len(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn hops(&self) -> usize {
        self.d - 1
    }

    pub fn neighbors(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(2);
        if node > 0 && node < self.d {
            out.push(node - 1);
        }
        if node + 1 < self.d {
            out.push(node + 1);
        }
        out
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        a < self.d && b < self.d && a.abs_diff(b) == 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub tail: Point,
    pub head: Point,
}

impl Segment {
    pub fn length(&self) -> f64 {
        self.tail.distance(&self.head)
    }

    pub fn point_at(&self, offset: f64) -> Point {
        let len = self.length();
        let f = if len > 0.0 { offset / len } else { 0.0 };
        Point::new(
            self.tail.x + (self.head.x - self.tail.x) * f,
            self.tail.y + (self.head.y - self.tail.y) * f,
        )
    }
}

/// Directed road segments with a turning matrix stored row-sparse.
#[derive(Clone, Debug, PartialEq)]
pub struct RoadGraph {
    segments: Vec<Segment>,
    transitions: Vec<Vec<(usize, f64)>>,
}

impl RoadGraph {
    /// Builds and validates a graph from segments and `(from, to, p)` triples.
    pub fn new(segments: Vec<Segment>, triples: &[(usize, usize, f64)]) -> Result<Self> {
        let mut transitions = vec![Vec::new(); segments.len()];
        for &(i, j, p) in triples {
            if i >= segments.len() || j >= segments.len() {
                return Err(Error::invalid("road graph", format!("transition {i}->{j} names an unknown segment")));
            }
            transitions[i].push((j, p));
        }
        let graph = RoadGraph {
            segments,
            transitions,
        };
        graph.validate()?;
        Ok(graph)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::invalid("road graph", "no segments"));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if !(seg.length() > 0.0) {
                return Err(Error::invalid("road graph", format!("segment {i} has zero length")));
            }
        }
        for (i, row) in self.transitions.iter().enumerate() {
            let mut sum = 0.0;
            for (n, &(j, p)) in row.iter().enumerate() {
                if !(p > 0.0 && p <= 1.0 + STOCHASTIC_TOL) {
                    return Err(Error::invalid("road graph", format!("P[{i}][{j}] = {p} out of (0, 1]")));
                }
                if row[..n].iter().any(|&(jj, _)| jj == j) {
                    return Err(Error::invalid("road graph", format!("duplicate transition {i}->{j}")));
                }
                if self.segments[i].head.distance(&self.segments[j].tail) > JOIN_TOL {
                    return Err(Error::invalid(
                        "road graph",
                        format!("segment {j} does not start where segment {i} ends"),
                    ));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::invalid("road graph", format!("row {i} of P sums to {sum}")));
            }
        }
        Ok(())
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.transitions[i]
    }

    pub fn probability(&self, i: usize, j: usize) -> f64 {
        self.transitions[i]
            .iter()
            .find(|&&(jj, _)| jj == j)
            .map_or(0.0, |&(_, p)| p)
    }

    /// Draws the segment following `i`.
    pub fn next_segment<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> usize {
        let row = &self.transitions[i];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(j, p) in row {
            acc += p;
            if u < acc {
                return j;
            }
        }
        row.last().map_or(i, |&(j, _)| j)
    }

    /// Stationary distribution of `P` by power iteration on the lazy chain
    /// `(I + P)/2`, which shares its fixed point and avoids the period-2
    /// oscillation of bipartite grids.
    pub fn stationary_distribution(&self, tol: f64, max_iter: usize) -> Vec<f64> {
        let n = self.len();
        let mut pi = vec![1.0 / n as f64; n];
        let mut next = vec![0.0; n];
        for _ in 0..max_iter {
            next.iter_mut().zip(&pi).for_each(|(nx, &p)| *nx = 0.5 * p);
            for (i, row) in self.transitions.iter().enumerate() {
                for &(j, p) in row {
                    next[j] += 0.5 * pi[i] * p;
                }
            }
            let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut pi, &mut next);
            if diff < tol {
                break;
            }
        }
        pi
    }

    /// Serializes to the line-oriented `SEG`/`TRANS` text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.segments.iter().enumerate() {
            let _ = writeln!(out, "SEG {i} {} {} {} {}", s.tail.x, s.tail.y, s.head.x, s.head.y);
        }
        for (i, row) in self.transitions.iter().enumerate() {
            for &(j, p) in row {
                let _ = writeln!(out, "TRANS {i} {j} {p}");
            }
        }
        out
    }

    /// Parses the `SEG id x1 y1 x2 y2` / `TRANS i j p` format. Blank lines
    /// and `#` comments are ignored; segment ids must cover `0..n`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut segs: Vec<Option<Segment>> = Vec::new();
        let mut triples = Vec::new();
        let err = |line: usize, reason: String| Error::RoadGraph { line, reason };
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields[0] {
                "SEG" => {
                    if fields.len() != 6 {
                        return Err(err(line_no, "SEG expects: SEG id x1 y1 x2 y2".into()));
                    }
                    let id: usize = fields[1]
                        .parse()
                        .map_err(|_| err(line_no, format!("bad segment id {:?}", fields[1])))?;
                    let mut c = [0.0; 4];
                    for (slot, f) in c.iter_mut().zip(&fields[2..]) {
                        *slot = f
                            .parse()
                            .map_err(|_| err(line_no, format!("bad coordinate {f:?}")))?;
                    }
                    if segs.len() <= id {
                        segs.resize(id + 1, None);
                    }
                    if segs[id].is_some() {
                        return Err(err(line_no, format!("duplicate segment {id}")));
                    }
                    segs[id] = Some(Segment {
                        tail: Point::new(c[0], c[1]),
                        head: Point::new(c[2], c[3]),
                    });
                }
                "TRANS" => {
                    if fields.len() != 4 {
                        return Err(err(line_no, "TRANS expects: TRANS i j p".into()));
                    }
                    let i: usize = fields[1]
                        .parse()
                        .map_err(|_| err(line_no, format!("bad segment id {:?}", fields[1])))?;
                    let j: usize = fields[2]
                        .parse()
                        .map_err(|_| err(line_no, format!("bad segment id {:?}", fields[2])))?;
                    let p: f64 = fields[3]
                        .parse()
                        .map_err(|_| err(line_no, format!("bad probability {:?}", fields[3])))?;
                    triples.push((i, j, p));
                }
                other => return Err(err(line_no, format!("unknown record {other:?}"))),
            }
        }
        let segments = segs
            .into_iter()
            .enumerate()
            .map(|(i, s)| s.ok_or_else(|| err(0, format!("segment {i} is missing"))))
            .collect::<Result<Vec<_>>>()?;
        RoadGraph::new(segments, &triples).map_err(|e| match e {
            Error::Invalid { reason, .. } => err(0, reason),
            other => other,
        })
    }
}

/// Manhattan grid of `rows × cols` intersections spaced `block_m` apart,
/// every street two-way.
///
/// At an intersection a vehicle goes straight with probability `turn_bias`
/// when it can; the remaining mass is split evenly among the legal turns.
/// U-turns are only taken at dead ends.
pub fn build_grid(rows: usize, cols: usize, block_m: f64, turn_bias: f64) -> Result<RoadGraph> {
    if rows < 2 || cols < 2 {
        return Err(Error::invalid("topology.rows/cols", "grid needs at least 2x2 intersections"));
    }
    if !(block_m > 0.0) {
        return Err(Error::invalid("topology.block_m", "must be positive"));
    }
    if !(0.0..=1.0).contains(&turn_bias) {
        return Err(Error::invalid("topology.turn_bias", "must lie in [0, 1]"));
    }
    let node = |r: usize, c: usize| Point::new(c as f64 * block_m, r as f64 * block_m);
    // (tail, head) as intersection coordinates
    let mut ends: Vec<((usize, usize), (usize, usize))> = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                ends.push(((r, c), (r, c + 1)));
                ends.push(((r, c + 1), (r, c)));
            }
            if r + 1 < rows {
                ends.push(((r, c), (r + 1, c)));
                ends.push(((r + 1, c), (r, c)));
            }
        }
    }
    let segments: Vec<Segment> = ends
        .iter()
        .map(|&((r0, c0), (r1, c1))| Segment {
            tail: node(r0, c0),
            head: node(r1, c1),
        })
        .collect();

    let dir = |e: &((usize, usize), (usize, usize))| {
        (
            e.1 .0 as isize - e.0 .0 as isize,
            e.1 .1 as isize - e.0 .1 as isize,
        )
    };
    let mut triples = Vec::new();
    for (i, e) in ends.iter().enumerate() {
        let here = e.1;
        let outgoing: Vec<usize> = (0..ends.len()).filter(|&j| ends[j].0 == here).collect();
        let no_uturn: Vec<usize> = outgoing.iter().copied().filter(|&j| ends[j].1 != e.0).collect();
        let options = if no_uturn.is_empty() { outgoing } else { no_uturn };
        let straight = options.iter().copied().find(|&j| dir(&ends[j]) == dir(e));
        match straight {
            Some(s) if options.len() > 1 => {
                let turns = (options.len() - 1) as f64;
                for &j in &options {
                    let p = if j == s { turn_bias } else { (1.0 - turn_bias) / turns };
                    if p > 0.0 {
                        triples.push((i, j, p));
                    }
                }
            }
            _ => {
                let p = 1.0 / options.len() as f64;
                triples.extend(options.iter().map(|&j| (i, j, p)));
            }
        }
    }
    RoadGraph::new(segments, &triples)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleState {
    pub segment: usize,
    /// Meters travelled along the current segment.
    pub offset: f64,
    /// Meters per second, fixed for the vehicle's lifetime.
    pub speed: f64,
}

impl VehicleState {
    pub fn position(&self, graph: &RoadGraph) -> Point {
        graph.segments[self.segment].point_at(self.offset)
    }
}

/// Places vehicles on segments drawn proportionally to segment length, at a
/// uniform offset, with speeds uniform on `[speed_min, speed_max]`.
pub fn place_vehicles<R: Rng + ?Sized>(
    graph: &RoadGraph,
    count: usize,
    speed_min: f64,
    speed_max: f64,
    rng: &mut R,
) -> Vec<VehicleState> {
    let total: f64 = graph.segments.iter().map(Segment::length).sum();
    (0..count)
        .map(|_| {
            let mut u = rng.random::<f64>() * total;
            let mut segment = graph.len() - 1;
            for (i, s) in graph.segments.iter().enumerate() {
                if u < s.length() {
                    segment = i;
                    break;
                }
                u -= s.length();
            }
            let offset = rng.random::<f64>() * graph.segments[segment].length();
            let speed = if speed_max > speed_min {
                rng.random_range(speed_min..=speed_max)
            } else {
                speed_min
            };
            VehicleState {
                segment,
                offset,
                speed,
            }
        })
        .collect()
}

/// Advances every vehicle by `speed · dt`, carrying leftover distance into
/// segments drawn from `P` when a segment end is passed.
pub fn step_mobility<R: Rng + ?Sized>(
    vehicles: &mut [VehicleState],
    graph: &RoadGraph,
    dt: f64,
    rng: &mut R,
) {
    for v in vehicles.iter_mut() {
        v.offset += v.speed * dt;
        loop {
            let len = graph.segments[v.segment].length();
            if v.offset < len {
                break;
            }
            v.offset -= len;
            v.segment = graph.next_segment(v.segment, rng);
        }
    }
}

/// All other nodes within `radius_m` (inclusive) of `center`.
pub fn neighbors_within(positions: &[Point], center: usize, radius_m: f64) -> Vec<usize> {
    let c = positions[center];
    positions
        .iter()
        .enumerate()
        .filter(|&(i, p)| i != center && p.distance(&c) <= radius_m)
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn line_adjacency() {
        assert!(build_line(1).is_err());
        let pair = build_line(2).unwrap();
        assert_eq!(pair.neighbors(0), vec![1]);
        assert_eq!(pair.neighbors(1), vec![0]);
        let five = build_line(5).unwrap();
        assert_eq!(five.neighbors(2), vec![1, 3]);
        let long = build_line(31).unwrap();
        assert_eq!(long.hops(), 30);
        for a in 0..31 {
            for b in 0..31 {
                assert_eq!(long.adjacent(a, b), long.neighbors(a).contains(&b));
                assert_eq!(long.adjacent(a, b), long.adjacent(b, a));
            }
        }
    }

    #[test]
    fn small_grid_is_stochastic() {
        let g = build_grid(2, 2, 100.0, 0.5).unwrap();
        assert_eq!(g.len(), 8);
        for i in 0..g.len() {
            let sum: f64 = g.row(i).iter().map(|&(_, p)| p).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        assert!(build_grid(1, 5, 100.0, 0.5).is_err());
        assert!(build_grid(3, 3, 0.0, 0.5).is_err());
    }

    #[test]
    fn full_bias_goes_straight() {
        let g = build_grid(3, 3, 100.0, 1.0).unwrap();
        // eastbound segment from (1,0) to (1,1) continues to (1,2)
        let seg = g
            .segments()
            .iter()
            .position(|s| s.tail == Point::new(0.0, 100.0) && s.head == Point::new(100.0, 100.0))
            .unwrap();
        let row = g.row(seg);
        assert_eq!(row.len(), 1);
        let next = g.segments()[row[0].0];
        assert_eq!(next.head, Point::new(200.0, 100.0));
        assert_eq!(row[0].1, 1.0);
    }

    #[test]
    fn kinematics_and_carry_over() {
        let g = build_grid(3, 3, 100.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut v = [VehicleState {
            segment: 0,
            offset: 0.0,
            speed: 20.0,
        }];
        step_mobility(&mut v, &g, 1.0 / 3.0, &mut rng);
        assert!((v[0].offset - 6.666_666_666_666_667).abs() < 1e-9);
        assert_eq!(v[0].segment, 0);

        let mut v = [VehicleState {
            segment: 0,
            offset: 99.0,
            speed: 20.0,
        }];
        step_mobility(&mut v, &g, 1.0 / 3.0, &mut rng);
        assert!((v[0].offset - 5.666_666_666_666_667).abs() < 1e-9);
        assert!(g.probability(0, v[0].segment) > 0.0);
    }

    #[test]
    fn offsets_stay_in_bounds() {
        let g = build_grid(10, 10, 150.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut vs = place_vehicles(&g, 236, 15.0, 25.0, &mut rng);
        for _ in 0..10_000 {
            step_mobility(&mut vs, &g, 1.0 / 3.0, &mut rng);
        }
        assert_eq!(vs.len(), 236);
        for v in &vs {
            assert!(v.offset >= 0.0 && v.offset <= g.segments()[v.segment].length());
            assert!((15.0..=25.0).contains(&v.speed));
        }
    }

    #[test]
    fn closed_ball_neighbors() {
        let pts = [
            Point::new(0.0, 0.0),
            Point::new(150.0, 0.0),
            Point::new(0.0, 250.0),
            Point::new(0.0, -200.0),
        ];
        assert_eq!(neighbors_within(&pts, 0, 200.0), vec![1, 3]);
    }

    #[test]
    fn occupancy_matches_stationary_distribution() {
        let g = build_grid(10, 10, 100.0, 0.5).unwrap();
        let pi = g.stationary_distribution(1e-13, 100_000);
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-9);

        // 2000 independent walkers started from pi, 500 transitions each.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut counts = vec![0u64; g.len()];
        let walkers = 2000;
        let steps = 500;
        let cdf: Vec<f64> = pi
            .iter()
            .scan(0.0, |acc, &p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        for _ in 0..walkers {
            let u: f64 = rng.random();
            let mut s = cdf.partition_point(|&c| c < u).min(g.len() - 1);
            for _ in 0..steps {
                s = g.next_segment(s, &mut rng);
                counts[s] += 1;
            }
        }
        let n = (walkers * steps) as f64;
        let tv: f64 = counts
            .iter()
            .zip(&pi)
            .map(|(&c, &p)| (c as f64 / n - p).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02, "total variation {tv}");
        for (&c, &p) in counts.iter().zip(&pi) {
            let emp = c as f64 / n;
            assert!((emp - p).abs() < 0.2 * p, "segment occupancy {emp} vs {p}");
        }

        // mirror-image segments share stationary mass
        let find = |t: Point, h: Point| {
            g.segments()
                .iter()
                .position(|s| s.tail == t && s.head == h)
                .unwrap()
        };
        let a = find(Point::new(0.0, 0.0), Point::new(100.0, 0.0));
        let b = find(Point::new(900.0, 900.0), Point::new(800.0, 900.0));
        assert!((pi[a] - pi[b]).abs() < 1e-9);
    }

    #[test]
    fn text_round_trip_and_validation() {
        let g = build_grid(3, 4, 120.0, 0.6).unwrap();
        let parsed = RoadGraph::parse(&g.to_text()).unwrap();
        assert_eq!(parsed.len(), g.len());
        for i in 0..g.len() {
            for &(j, p) in g.row(i) {
                assert!((parsed.probability(i, j) - p).abs() < 1e-12);
            }
        }

        let bad_sum = "SEG 0 0 0 10 0\nSEG 1 10 0 0 0\nTRANS 0 1 0.5\nTRANS 1 0 1\n";
        assert!(matches!(RoadGraph::parse(bad_sum), Err(Error::RoadGraph { .. })));
        let disconnected = "SEG 0 0 0 10 0\nSEG 1 50 0 0 0\nTRANS 0 1 1\nTRANS 1 0 1\n";
        assert!(RoadGraph::parse(disconnected).is_err());
        let garbage = "SEG 0 0 0 10\n";
        assert_eq!(
            RoadGraph::parse(garbage),
            Err(Error::RoadGraph {
                line: 1,
                reason: "SEG expects: SEG id x1 y1 x2 y2".into()
            })
        );
        let ok = "# loop\nSEG 0 0 0 10 0\nSEG 1 10 0 0 0\n\nTRANS 0 1 1\nTRANS 1 0 1.0\n";
        assert_eq!(RoadGraph::parse(ok).unwrap().len(), 2);
    }
}

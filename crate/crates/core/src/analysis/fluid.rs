//! RK4 integration of the fluid system with renewal events.
//!
//! Nodes are indexed absolutely: node `i` (1-based) waits behind node `i-1`,
//! node 0 being the source. A node whose buffer fraction reaches 1 decodes
//! and from then on acts as a source of fullness `M`. Round `k` runs from the
//! `(k-1)`-th to the `k`-th decode; seen from its start, node `k-1+j` plays
//! the role of node `j`.

use super::InverseRate;
use crate::error::{Error, Result};

/// Right-hand side of the fluid system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Dynamics {
    /// `h_i' = 1 - h_i / h_{i-1}`; decoded nodes hold `M`.
    Threshold(InverseRate),
    /// Relays forward with probability equal to their buffer fraction:
    /// `h_i' = h_{i-1} - h_i`, and `h_1' = 1` behind a decoded node.
    Proportional,
}

impl Dynamics {
    fn decoded_value(self) -> f64 {
        match self {
            Dynamics::Threshold(m) => m.value(),
            Dynamics::Proportional => f64::INFINITY,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluidOptions {
    /// Macro step; samples and order checks happen at its multiples.
    pub dt: f64,
    /// Substeps never exceed `stiffness · min h_{i-1}` over active nodes.
    pub stiffness: f64,
    /// Keep every `sample_every`-th macro step in the trajectory (0 keeps none).
    pub sample_every: usize,
}

impl Default for FluidOptions {
    fn default() -> Self {
        FluidOptions {
            dt: 1e-4,
            stiffness: 0.5,
            sample_every: 1,
        }
    }
}

/// Largest allowed distance from 1 after locating a crossing.
const CROSSING_TOL: f64 = 1e-6;
/// First step taken when some node waits behind an empty buffer.
const BOOTSTRAP_STEP: f64 = 1e-9;

/// Integrator state.
#[derive(Clone, Debug)]
pub struct FluidSystem {
    dynamics: Dynamics,
    h: Vec<f64>,
    /// Number of leading nodes that have decoded.
    decoded: usize,
    t: f64,
    crossings: Vec<f64>,
    opts: FluidOptions,
    // scratch buffers for the RK4 stages
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl FluidSystem {
    pub fn new(dynamics: Dynamics, h0: &[f64], opts: FluidOptions) -> Result<Self> {
        if let Dynamics::Threshold(m) = dynamics {
            m.check()?;
        }
        if !(opts.dt > 0.0) || !(opts.stiffness > 0.0) {
            return Err(Error::invalid("dt", "step and stiffness factor must be positive"));
        }
        if h0.is_empty() {
            return Err(Error::invalid("n_nodes", "need at least one node"));
        }
        for (i, &h) in h0.iter().enumerate() {
            if !(0.0..1.0).contains(&h) {
                return Err(Error::invalid("h0", format!("h_{} = {h} outside [0, 1)", i + 1)));
            }
            if i > 0 && h > h0[i - 1] {
                return Err(Error::invalid("h0", format!("h_{} exceeds h_{}", i + 1, i)));
            }
        }
        let n = h0.len();
        Ok(FluidSystem {
            dynamics,
            h: h0.to_vec(),
            decoded: 0,
            t: 0.0,
            crossings: Vec::new(),
            opts,
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Buffer fractions `h_1..h_n`; decoded nodes read `M` (or `inf`).
    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn decoded(&self) -> usize {
        self.decoded
    }

    /// Absolute decode times `T_1, T_2, ...`.
    pub fn crossings(&self) -> &[f64] {
        &self.crossings
    }

    pub fn round_durations(&self) -> Vec<f64> {
        round_durations(&self.crossings)
    }

    fn derivative(dynamics: Dynamics, first: usize, y: &[f64], out: &mut [f64]) {
        out[..first].fill(0.0);
        let mut prev_d = 1.0;
        for i in first..y.len() {
            let d = match dynamics {
                Dynamics::Threshold(m) => {
                    let prev = if i == first { m.value() } else { y[i - 1] };
                    if prev == 0.0 {
                        // both buffers empty: follow the linear start h_i ≈ d_i t
                        prev_d / (1.0 + prev_d)
                    } else if prev.is_infinite() {
                        1.0
                    } else {
                        1.0 - y[i] / prev
                    }
                }
                Dynamics::Proportional => {
                    if i == first {
                        1.0
                    } else {
                        y[i - 1] - y[i]
                    }
                }
            };
            out[i] = d;
            prev_d = d;
        }
    }

    /// One RK4 step of length `dt` from `self.h`, result in `out`.
    fn rk4(&mut self, dt: f64, out: &mut Vec<f64>) {
        let first = self.decoded;
        let n = self.h.len();
        let dyn_ = self.dynamics;
        let [k1, k2, k3, k4] = &mut self.k;
        Self::derivative(dyn_, first, &self.h, k1);
        for i in first..n {
            self.tmp[i] = self.h[i] + 0.5 * dt * k1[i];
        }
        self.tmp[..first].copy_from_slice(&self.h[..first]);
        Self::derivative(dyn_, first, &self.tmp, k2);
        for i in first..n {
            self.tmp[i] = self.h[i] + 0.5 * dt * k2[i];
        }
        Self::derivative(dyn_, first, &self.tmp, k3);
        for i in first..n {
            self.tmp[i] = self.h[i] + dt * k3[i];
        }
        Self::derivative(dyn_, first, &self.tmp, k4);
        out.clear();
        out.extend_from_slice(&self.h);
        for i in first..n {
            out[i] = self.h[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    /// Largest stable substep for the active nodes.
    fn substep_limit(&self) -> f64 {
        if self.dynamics == Dynamics::Proportional {
            return f64::INFINITY;
        }
        let n = self.h.len();
        if self.decoded + 1 >= n {
            return f64::INFINITY;
        }
        let min_prev = self.h[self.decoded..n - 1].iter().copied().fold(f64::INFINITY, f64::min);
        if min_prev == 0.0 {
            BOOTSTRAP_STEP
        } else {
            self.opts.stiffness * min_prev
        }
    }

    /// Advances by exactly `span`, locating every crossing on the way.
    pub fn step(&mut self, span: f64) -> Result<()> {
        let target = self.t + span;
        let mut next = Vec::with_capacity(self.h.len());
        let mut remaining = span;
        while remaining > 0.0 && self.decoded < self.h.len() {
            let dt = remaining.min(self.substep_limit());
            self.rk4(dt, &mut next);
            let f = self.decoded;
            if next[f] < 1.0 {
                std::mem::swap(&mut self.h, &mut next);
                self.t += dt;
                remaining -= dt;
                if remaining < 1e-15 * target.abs().max(1.0) {
                    remaining = 0.0;
                }
                continue;
            }
            // crossing inside this substep: linear estimate, then one secant pass
            let (h_start, h_end) = (self.h[f], next[f]);
            let dt1 = dt * (1.0 - h_start) / (h_end - h_start);
            self.rk4(dt1, &mut next);
            let h1 = next[f];
            let dt2 = if (h1 - 1.0).abs() > 1e-15 {
                let (ta, ha, tb, hb) = if h1 < 1.0 {
                    (dt1, h1, dt, h_end)
                } else {
                    (0.0, h_start, dt1, h1)
                };
                ta + (tb - ta) * (1.0 - ha) / (hb - ha)
            } else {
                dt1
            };
            if dt2 != dt1 {
                self.rk4(dt2, &mut next);
            }
            let overshoot = next[f] - 1.0;
            if overshoot.abs() > CROSSING_TOL {
                return Err(Error::StepTooCoarse {
                    node: f + 1,
                    t: self.t + dt2,
                    overshoot,
                });
            }
            std::mem::swap(&mut self.h, &mut next);
            self.t += dt2;
            remaining -= dt2;
            self.renew();
        }
        if self.decoded == self.h.len() {
            self.t = target;
        }
        Ok(())
    }

    /// Marks the frontier node (and any node already at 1 behind it) decoded.
    fn renew(&mut self) {
        let full = self.dynamics.decoded_value();
        while self.decoded < self.h.len() && self.h[self.decoded] >= 1.0 - CROSSING_TOL {
            self.h[self.decoded] = full;
            self.decoded += 1;
            self.crossings.push(self.t);
        }
    }

    /// Integrates in macro steps up to time `t_end`.
    pub fn advance_to(&mut self, t_end: f64) -> Result<()> {
        while self.t < t_end - 1e-12 {
            self.step((t_end - self.t).min(self.opts.dt))?;
        }
        Ok(())
    }

    /// Integrates in macro steps until `rounds` nodes have decoded.
    pub fn advance_rounds(&mut self, rounds: usize) -> Result<()> {
        if rounds > self.h.len() {
            return Err(Error::invalid(
                "rounds",
                format!("{rounds} rounds need at least as many nodes, have {}", self.h.len()),
            ));
        }
        while self.crossings.len() < rounds {
            self.step(self.opts.dt)?;
        }
        Ok(())
    }
}

fn round_durations(crossings: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    crossings
        .iter()
        .map(|&c| {
            let d = c - prev;
            prev = c;
            d
        })
        .collect()
}

/// Sampled fluid trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct FluidTrajectory {
    pub dynamics: Dynamics,
    pub times: Vec<f64>,
    /// `states[s][i]` is `h_{i+1}` at `times[s]`.
    pub states: Vec<Vec<f64>>,
    /// Absolute decode times.
    pub crossings: Vec<f64>,
}

impl FluidTrajectory {
    /// Per-round durations `T^[k]`.
    pub fn round_durations(&self) -> Vec<f64> {
        round_durations(&self.crossings)
    }

    /// CSV with columns `t,h_1..h_n`; decoded nodes print their fullness.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, Vec::len);
        let mut s = String::from("t");
        for i in 1..=n {
            s.push_str(&format!(",h_{i}"));
        }
        s.push('\n');
        for (t, row) in self.times.iter().zip(&self.states) {
            s.push_str(&format!("{t:.6}"));
            for h in row {
                s.push_str(&format!(",{h:.9}"));
            }
            s.push('\n');
        }
        s
    }
}

fn padded(h0: &[f64], n: usize) -> Result<Vec<f64>> {
    if h0.len() > n {
        return Err(Error::invalid(
            "h0",
            format!("{} initial values for {n} nodes", h0.len()),
        ));
    }
    let mut v = h0.to_vec();
    v.resize(n, 0.0);
    Ok(v)
}

/// Integrates `dynamics` from `h0` (padded with empty buffers to `n_nodes`)
/// until `t_end`.
pub fn fluid_integrate_with(
    dynamics: Dynamics,
    n_nodes: usize,
    t_end: f64,
    h0: &[f64],
    opts: FluidOptions,
) -> Result<FluidTrajectory> {
    let mut sys = FluidSystem::new(dynamics, &padded(h0, n_nodes)?, opts)?;
    let mut times = vec![0.0];
    let mut states = vec![sys.h().to_vec()];
    let mut count = 0usize;
    while sys.t() < t_end - 1e-12 {
        sys.step((t_end - sys.t()).min(opts.dt))?;
        count += 1;
        let last = sys.t() >= t_end - 1e-12;
        if opts.sample_every > 0 && (count.is_multiple_of(opts.sample_every) || last) {
            times.push(sys.t());
            states.push(sys.h().to_vec());
        }
    }
    Ok(FluidTrajectory {
        dynamics,
        times,
        states,
        crossings: sys.crossings().to_vec(),
    })
}

/// Threshold fluid system with buffer-fraction step `dt`.
pub fn fluid_integrate(m: InverseRate, n_nodes: usize, t_end: f64, dt: f64, h0: &[f64]) -> Result<FluidTrajectory> {
    fluid_integrate_with(
        Dynamics::Threshold(m),
        n_nodes,
        t_end,
        h0,
        FluidOptions {
            dt,
            ..FluidOptions::default()
        },
    )
}

/// Round durations `T^[1..=rounds]` from `h0` (padded with zeros to
/// `rounds` nodes if shorter).
pub fn fluid_rounds(dynamics: Dynamics, rounds: usize, h0: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = rounds.max(h0.len());
    let mut sys = FluidSystem::new(
        dynamics,
        &padded(h0, n)?,
        FluidOptions {
            dt,
            ..FluidOptions::default()
        },
    )?;
    sys.advance_rounds(rounds)?;
    let mut d = sys.round_durations();
    d.truncate(rounds);
    Ok(d)
}

/// `Q_0..Q_imax` at time `t` within the first round, where
/// `Q_0 = e^{t/M}`, `Q_i(0) = h_1(0)...h_i(0)` and `Q_i' = Q_{i-1}`;
/// then `h_i = Q_i / Q_{i-1}`.
pub fn q_functions(m: InverseRate, h0: &[f64], t: f64, imax: usize) -> Result<Vec<f64>> {
    let m = m.check()?;
    let mut q0 = Vec::with_capacity(imax + 1);
    let mut prod = 1.0;
    q0.push(1.0);
    for i in 1..=imax {
        prod *= h0.get(i - 1).copied().unwrap_or(0.0);
        q0.push(prod);
    }
    let mut out = Vec::with_capacity(imax + 1);
    out.push((t * m.recip()).exp());
    // t^j / j! for j = 0..=imax
    let mut pw = vec![1.0; imax + 1];
    for j in 1..=imax {
        pw[j] = pw[j - 1] * t / j as f64;
    }
    for i in 1..=imax {
        let mut s: f64 = (0..i).map(|j| q0[i - j] * pw[j]).sum();
        // t^i Σ_{r≥0} (t/M)^r / (i+r)!
        let mut term = pw[i];
        let mut tail = 0.0;
        let mut r = 0usize;
        while term != 0.0 && r < 400 {
            tail += term;
            r += 1;
            term *= t * m.recip() / (i + r) as f64;
            if term < 1e-18 * tail {
                break;
            }
        }
        s += tail;
        out.push(s);
    }
    Ok(out)
}

/// Integrates from two ordered initial conditions (`h0_a ≥ h0_b`
/// componentwise) and checks that the order persists at every macro step.
/// Returns `Ok(true)` when it does and `Err(OrderViolated)` at the first
/// offending node and time otherwise.
pub fn monotonicity_check(
    m: InverseRate,
    h0_a: &[f64],
    h0_b: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<bool> {
    if h0_a.len() != h0_b.len() {
        return Err(Error::invalid("h0", "initial conditions differ in length"));
    }
    if let Some(i) = (0..h0_a.len()).find(|&i| h0_a[i] < h0_b[i]) {
        return Err(Error::invalid("h0", format!("h0_a < h0_b at node {}", i + 1)));
    }
    let opts = FluidOptions {
        dt,
        ..FluidOptions::default()
    };
    let mut a = FluidSystem::new(Dynamics::Threshold(m), h0_a, opts)?;
    let mut b = FluidSystem::new(Dynamics::Threshold(m), h0_b, opts)?;
    const TOL: f64 = 1e-9;
    while a.t() < t_end - 1e-12 {
        let span = (t_end - a.t()).min(dt);
        a.step(span)?;
        b.step(span)?;
        for (i, (&x, &y)) in a.h().iter().zip(b.h()).enumerate() {
            if x < y - TOL {
                return Err(Error::OrderViolated {
                    node: i + 1,
                    t: a.t(),
                    gap: y - x,
                });
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    const INF: InverseRate = InverseRate::Infinite;

    #[test]
    fn first_round_is_linear_for_rateless() {
        let tr = fluid_integrate(INF, 6, 1.05, 1e-4, &[]).unwrap();
        for (t, row) in tr.times.iter().zip(&tr.states) {
            if *t >= 1.0 - 1e-9 {
                continue;
            }
            for i in 1..=5 {
                assert!((row[i - 1] - t / i as f64).abs() < 1e-6, "i={i} t={t}");
            }
        }
        assert!((tr.crossings[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn one_node_decodes_at_closed_form_time() {
        for m in [2.0, 3.0, 6.0] {
            let tr = fluid_integrate(InverseRate::Finite(m), 1, 3.0, 1e-3, &[]).unwrap();
            let want = m * (m / (m - 1.0)).ln();
            assert!((tr.crossings[0] - want).abs() < 1e-9, "M={m}");
        }
    }

    #[test]
    fn coarse_steps_are_reported() {
        let err = fluid_integrate(InverseRate::Finite(3.0), 1, 3.0, 1.0, &[]).unwrap_err();
        assert!(matches!(err, Error::StepTooCoarse { node: 1, .. }), "{err}");
    }

    #[test]
    fn q_functions_match_integrator() {
        for m in [InverseRate::Finite(3.0), InverseRate::Finite(2.0), INF] {
            let h0 = [0.6, 0.45, 0.3, 0.2];
            let tr = fluid_integrate(m, 4, 0.35, 1e-4, &h0).unwrap();
            assert!(tr.crossings.is_empty() || tr.crossings[0] > 0.35);
            for (t, row) in tr.times.iter().zip(&tr.states).step_by(50) {
                let q = q_functions(m, &h0, *t, 4).unwrap();
                for i in 1..=4 {
                    assert!((q[i] / q[i - 1] - row[i - 1]).abs() < 1e-6, "M={m} i={i} t={t}");
                }
            }
        }
    }

    #[test]
    fn invalid_initial_conditions() {
        assert!(fluid_integrate(INF, 3, 1.0, 1e-3, &[0.2, 0.5]).is_err());
        assert!(fluid_integrate(INF, 3, 1.0, 1e-3, &[1.0]).is_err());
        assert!(fluid_integrate(INF, 1, 1.0, 1e-3, &[0.1, 0.0]).is_err());
        assert!(fluid_integrate(INF, 3, 1.0, 0.0, &[]).is_err());
        assert!(fluid_rounds(Dynamics::Threshold(INF), 5, &[0.0; 6], 1e-3).is_ok());
    }

    #[test]
    fn equal_starts_stay_ordered() {
        let h0 = [0.5, 0.3, 0.1, 0.0];
        assert!(monotonicity_check(InverseRate::Finite(3.0), &h0, &h0, 2.0, 1e-3).unwrap());
        assert!(monotonicity_check(InverseRate::Finite(3.0), &[0.1], &[0.2], 1.0, 1e-3).is_err());
    }

    #[test]
    fn csv_header() {
        let tr = fluid_integrate(INF, 2, 0.01, 1e-3, &[]).unwrap();
        let csv = tr.to_csv();
        assert_eq!(csv.lines().next().unwrap(), "t,h_1,h_2");
        assert_eq!(csv.lines().count(), tr.times.len() + 1);
    }
}

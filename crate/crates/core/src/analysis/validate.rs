//! Comparison of the packet-level line simulation with its fluid limit.

use super::fluid::{Dynamics, FluidOptions, FluidSystem};
use super::InverseRate;
use crate::coding::{FileSpec, Precode};
use crate::engine::{run, RunConfig};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteFluidComparison {
    /// Largest `|min(H_i/k, 1) - min(h_i, 1)|` over the grid and `i ≤ n_nodes`.
    pub max_deviation: f64,
    /// Deviation per relay, same order as the nodes.
    pub per_node: Vec<f64>,
}

/// Runs the analytic-channel line with `n_nodes` relays and compares buffer
/// fractions with the fluid solution on `t_grid` (fluid time, one unit
/// being `k/(1-ε)` slots). Both sides are clipped at 1 so that decode
/// instants do not dominate the deviation.
pub fn discrete_vs_fluid(
    m: u32,
    erasure_prob: f64,
    k: u32,
    n_nodes: usize,
    t_grid: &[f64],
    seed: u64,
) -> Result<DiscreteFluidComparison> {
    if n_nodes == 0 {
        return Err(Error::invalid("n_nodes", "need at least one relay"));
    }
    if t_grid.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::invalid("t_grid", "times must be non-negative"));
    }
    let mut grid = t_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let scale = f64::from(k) / (1.0 - erasure_prob);
    let last = grid.last().copied().unwrap_or(0.0);

    let file = FileSpec::new(k, 1000, Precode::Fixed(m))?;
    let mut cfg = RunConfig::line(n_nodes + 1, file, erasure_prob, seed);
    cfg.record_buffers = true;
    cfg.horizon_slots = (last * scale).ceil() as u64 + 1;
    let metrics = run(&cfg)?;
    let trace = metrics.buffer_trace.expect("buffers were recorded");

    let mut fluid = FluidSystem::new(
        Dynamics::Threshold(InverseRate::Finite(f64::from(m))),
        &vec![0.0; n_nodes],
        FluidOptions::default(),
    )?;
    let mut per_node = vec![0.0f64; n_nodes];
    for &t in &grid {
        fluid.advance_to(t)?;
        let slot = ((t * scale).round() as usize).min(trace.len() - 1);
        let row = &trace[slot];
        for i in 0..n_nodes {
            let sim = (f64::from(row[i + 1]) / f64::from(k)).min(1.0);
            let ode = fluid.h()[i].min(1.0);
            per_node[i] = per_node[i].max((sim - ode).abs());
        }
    }
    Ok(DiscreteFluidComparison {
        max_deviation: per_node.iter().copied().fold(0.0, f64::max),
        per_node,
    })
}

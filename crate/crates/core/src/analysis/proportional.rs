//! Fluid system of proportional forwarding, where an undecoded relay
//! transmits with probability equal to its buffer fraction.

use super::fluid::{fluid_integrate_with, Dynamics, FluidOptions, FluidSystem, FluidTrajectory};
use crate::error::Result;

/// Integrates `h_i' = h_{i-1} - h_i` (and `h' = 1` behind a decoded node)
/// with the usual renewal at `h = 1`.
pub fn proportional_fluid_integrate(n_nodes: usize, t_end: f64, dt: f64, h0: &[f64]) -> Result<FluidTrajectory> {
    fluid_integrate_with(
        Dynamics::Proportional,
        n_nodes,
        t_end,
        h0,
        FluidOptions {
            dt,
            ..FluidOptions::default()
        },
    )
}

/// Ratios `r_i = h_i / h_{i-1}` of the undecoded nodes. The frontier node
/// uses `h / (h + 1)`; an empty predecessor gives `r = 0`.
pub fn ratio_profile(h: &[f64]) -> Vec<f64> {
    let first = h.iter().position(|x| x.is_finite()).unwrap_or(h.len());
    (first..h.len())
        .map(|i| {
            if i == first {
                h[i] / (h[i] + 1.0)
            } else if h[i - 1] > 0.0 {
                h[i] / h[i - 1]
            } else {
                0.0
            }
        })
        .collect()
}

/// Round time of the proportional fixed point: the root in `(0, 1)` of
/// `h_1(0) T + T²/2 = h_1(0)` with `h_1(0) = 1 - T`, i.e. `2 - √2`.
pub fn proportional_fixed_point() -> f64 {
    2.0 - std::f64::consts::SQRT_2
}

/// Round durations over `rounds` rounds from empty buffers, with the largest
/// ratio seen at any macro step.
#[derive(Clone, Debug, PartialEq)]
pub struct ProportionalRounds {
    pub durations: Vec<f64>,
    pub max_ratio: f64,
}

impl ProportionalRounds {
    pub fn running_average(&self) -> f64 {
        self.durations.iter().sum::<f64>() / self.durations.len().max(1) as f64
    }
}

pub fn proportional_rounds(rounds: usize, dt: f64) -> Result<ProportionalRounds> {
    let n = rounds + 1;
    let mut sys = FluidSystem::new(
        Dynamics::Proportional,
        &vec![0.0; n],
        FluidOptions {
            dt,
            ..FluidOptions::default()
        },
    )?;
    let mut max_ratio: f64 = 0.0;
    while sys.crossings().len() < rounds {
        sys.step(dt)?;
        max_ratio = ratio_profile(sys.h()).into_iter().fold(max_ratio, f64::max);
    }
    let mut durations = sys.round_durations();
    durations.truncate(rounds);
    Ok(ProportionalRounds { durations, max_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_point_root() {
        let t = proportional_fixed_point();
        assert!((t - 0.585_786_437_626_905).abs() < 1e-15);
        let h1 = 1.0 - t;
        assert!((h1 * t + t * t / 2.0 - h1).abs() < 1e-15);
    }

    #[test]
    fn first_round_closed_forms() {
        // from empty buffers: h_1 = t, h_2 = t - 1 + e^{-t}
        let tr = proportional_fluid_integrate(3, 0.9, 1e-3, &[]).unwrap();
        for (t, row) in tr.times.iter().zip(&tr.states) {
            assert!((row[0] - t).abs() < 1e-9);
            assert!((row[1] - (t - 1.0 + (-t).exp())).abs() < 1e-9);
        }
    }

    #[test]
    fn ratios_stay_below_half() {
        let r = proportional_rounds(40, 1e-3).unwrap();
        assert!(r.max_ratio <= 0.5 + 1e-9, "{}", r.max_ratio);
        assert!(r.durations.iter().all(|&d| (0.5 - 1e-9..=1.0 + 1e-9).contains(&d)));
        assert_eq!(ratio_profile(&[f64::INFINITY, 0.5, 0.2, 0.0]), vec![0.5 / 1.5, 0.4, 0.0]);
    }
}

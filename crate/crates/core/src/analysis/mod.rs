//! Fluid-limit analysis of the line network: closed-form bounds, fixed
//! points of the renewal rounds, and ODE integration of buffer occupancy.
//!
//! Time is scaled so that one unit is `k / (1 - ε)` slots and buffer sizes
//! are fractions of `k`.

mod bounds;
mod fixed_point;
mod fluid;
mod proportional;
mod validate;

pub use bounds::{h_star, one_hop_asymptote, r_star, theorem1_bound};
pub use fixed_point::{fixed_point_profile, h_inf_for_t, solve_tf, FixedPointProfile, TfSolution};
pub use fluid::{
    fluid_integrate, fluid_integrate_with, fluid_rounds, monotonicity_check, q_functions, Dynamics, FluidOptions,
    FluidSystem, FluidTrajectory,
};
pub use proportional::{
    proportional_fixed_point, proportional_fluid_integrate, proportional_rounds, ratio_profile, ProportionalRounds,
};
pub use validate::{discrete_vs_fluid, DiscreteFluidComparison};

use crate::error::{Error, Result};

/// Inverse code rate `M`, possibly infinite (ideal rateless code).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InverseRate {
    Finite(f64),
    Infinite,
}

impl InverseRate {
    pub fn new(m: f64) -> Result<Self> {
        if m.is_infinite() && m > 0.0 {
            return Ok(InverseRate::Infinite);
        }
        if !(m > 1.0) {
            return Err(Error::invalid("M", format!("inverse rate must exceed 1, got {m}")));
        }
        Ok(InverseRate::Finite(m))
    }

    /// `M`, or `+inf`.
    pub fn value(self) -> f64 {
        match self {
            InverseRate::Finite(m) => m,
            InverseRate::Infinite => f64::INFINITY,
        }
    }

    /// `1/M`, zero for an infinite rate.
    pub fn recip(self) -> f64 {
        match self {
            InverseRate::Finite(m) => 1.0 / m,
            InverseRate::Infinite => 0.0,
        }
    }

    /// Convergence results are proven for `M >= 2` only.
    pub fn is_supported(self) -> bool {
        self.value() >= 2.0
    }

    fn check(self) -> Result<Self> {
        InverseRate::new(self.value())
    }
}

impl std::str::FromStr for InverseRate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
            return Ok(InverseRate::Infinite);
        }
        let m: f64 = t
            .parse()
            .map_err(|_| Error::invalid("M", format!("expected a number or \"inf\", got {s:?}")))?;
        InverseRate::new(m)
    }
}

impl std::fmt::Display for InverseRate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InverseRate::Finite(m) => write!(f, "{m}"),
            InverseRate::Infinite => f.write_str("inf"),
        }
    }
}

impl From<crate::coding::Precode> for InverseRate {
    fn from(p: crate::coding::Precode) -> Self {
        match p {
            crate::coding::Precode::Fixed(m) => InverseRate::Finite(f64::from(m)),
            crate::coding::Precode::Rateless => InverseRate::Infinite,
        }
    }
}

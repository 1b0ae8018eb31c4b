//! Fixed points of the renewal-round map.

use super::InverseRate;
use crate::error::{Error, Result};

const BISECTION_STEPS: usize = 200;
const SERIES_EPS: f64 = 1e-15;
const SERIES_CAP: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TfSolution {
    /// Asymptotic per-hop delivery time.
    pub tf: f64,
    /// Limit buffer fraction of the extremal fixed point; equal to `tf`.
    pub h_inf: f64,
    /// `false` for `1 < M < 2`, where convergence is not established.
    pub supported: bool,
}

/// Solves `-ln x = 1 - x/M` on `(0, 1]` by bisection. The left side minus
/// the right is strictly decreasing there, so the root is unique.
pub fn solve_tf(m: InverseRate, tol: f64) -> Result<TfSolution> {
    let m = m.check()?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    let f = |x: f64| -x.ln() - 1.0 + x * m.recip();
    let (mut lo, mut hi) = (f64::MIN_POSITIVE, 1.0);
    let mut x = 0.5 * (lo + hi);
    for _ in 0..BISECTION_STEPS {
        x = 0.5 * (lo + hi);
        let fx = f(x);
        if fx.abs() <= tol * 1e-3 || hi - lo <= f64::EPSILON * x {
            break;
        }
        if fx > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
    }
    Ok(TfSolution {
        tf: x,
        h_inf: x,
        supported: m.is_supported(),
    })
}

fn tf(m: InverseRate) -> Result<f64> {
    Ok(solve_tf(m, 1e-15)?.tf)
}

/// Limit `h_inf` of the fixed point with round time `t`: the largest root of
/// `t = -h ln h / (1 - h/M)`, which lies in `[h^F, 1]`.
pub fn h_inf_for_t(m: InverseRate, t: f64) -> Result<f64> {
    let m = m.check()?;
    let t_max = tf(m)?;
    if !(t > 0.0) {
        return Err(Error::invalid("T", "must be positive"));
    }
    if t > t_max * (1.0 + 1e-12) {
        return Err(Error::NoFixedPoint { t, t_max });
    }
    let g = |h: f64| -h * h.ln() / (1.0 - h * m.recip());
    let (mut lo, mut hi) = (t_max, 1.0);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= f64::EPSILON * mid {
            break;
        }
        // g decreases from T^F at h^F to 0 at 1
        if g(mid) > t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointProfile {
    pub t: f64,
    pub h_inf: f64,
    /// `h_1(0), ..., h_depth(0)`.
    pub h0: Vec<f64>,
}

impl FixedPointProfile {
    /// Profile extended to `n` nodes, the tail filled with `h_inf`.
    pub fn padded(&self, n: usize) -> Vec<f64> {
        let mut v: Vec<f64> = self.h0.iter().copied().take(n).collect();
        v.resize(n, self.h_inf);
        v
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# T={:.12},h_inf={:.12}\ni,h0_i\n", self.t, self.h_inf);
        for (i, h) in self.h0.iter().enumerate() {
            s.push_str(&format!("{},{:.12}\n", i + 1, h));
        }
        s
    }
}

/// Round-start buffer profile that the renewal map sends to itself with
/// round time `t`:
/// `h_i(0) = e^{t/M} - t - t Σ_{j≥2} (1/j!) Π_{k=1}^{j-1} t / h_{i-k}(0)`,
/// with `h_i(0) = M` for `i ≤ 0`.
pub fn fixed_point_profile(m: InverseRate, t: f64, depth: usize) -> Result<FixedPointProfile> {
    let h_inf = h_inf_for_t(m, t)?;
    let m = m.check()?;
    let lead = (t * m.recip()).exp();
    let mut h: Vec<f64> = Vec::with_capacity(depth);
    for i in 0..depth {
        // predecessor k steps back; index < 0 means the source side
        let ratio = |k: usize| -> f64 {
            if k > i {
                t * m.recip()
            } else {
                t / h[i - k]
            }
        };
        let mut term = 0.5 * ratio(1);
        let mut sum = 0.0;
        let mut j = 2;
        while j < SERIES_CAP {
            sum += term;
            if term.abs() < SERIES_EPS {
                break;
            }
            term *= ratio(j) / (j as f64 + 1.0);
            j += 1;
        }
        let first = if i == 0 {
            // closed form, exact also for M = inf
            match m {
                InverseRate::Infinite => 1.0 - t,
                InverseRate::Finite(mv) => lead - mv * (t / mv).exp_m1(),
            }
        } else {
            lead - t - t * sum
        };
        h.push(first);
    }
    Ok(FixedPointProfile { t, h_inf, h0: h })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_tf_values() {
        let cases = [
            (2.0, 0.463_921_905_973_069),
            (2.5, 0.438_391_251_323_248),
            (3.0, 0.423_681_722_967_107),
            (4.0, 0.407_313_724_376_568),
            (6.0, 0.392_766_951_633_325),
            (10.0, 0.382_212_417_467_994),
            (1e6, 0.367_879_576_506_800),
        ];
        for (m, want) in cases {
            let s = solve_tf(InverseRate::Finite(m), 1e-12).unwrap();
            assert!((s.tf - want).abs() < 1e-12, "M={m}: {}", s.tf);
            assert!(s.h_inf >= m / (m * std::f64::consts::E - 1.0));
            assert!(s.supported);
        }
        let inf = solve_tf(InverseRate::Infinite, 1e-12).unwrap();
        assert!((inf.tf - (-1.0f64).exp()).abs() < 1e-12);
        assert!(!solve_tf(InverseRate::Finite(1.5), 1e-9).unwrap().supported);
        assert!(solve_tf(InverseRate::Finite(1.0), 1e-9).is_err());
        assert!(solve_tf(InverseRate::Finite(3.0), 0.0).is_err());
    }

    #[test]
    fn profile_first_entry_closed_form() {
        for m in [2.0, 3.0, 6.0] {
            let mr = InverseRate::Finite(m);
            let t = 0.8 * tf(mr).unwrap();
            let p = fixed_point_profile(mr, t, 8).unwrap();
            let want = (t / m).exp() - m * ((t / m).exp() - 1.0);
            assert!((p.h0[0] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn profile_at_extremal_point() {
        let t = (-1.0f64).exp();
        let p = fixed_point_profile(InverseRate::Infinite, t, 64).unwrap();
        assert!((p.h_inf - t).abs() < 1e-7);
        assert!((p.h0[0] - (1.0 - t)).abs() < 1e-15);
        assert!((p.h0[0] - (std::f64::consts::E - 1.0) * t).abs() < 1e-12);
        assert!(p.h0.windows(2).all(|w| w[1] < w[0]));
        assert!(p.h0.iter().all(|&h| h >= p.h_inf - 1e-7));
    }

    #[test]
    fn below_extremal_point_profile_decreases_to_limit() {
        let m = InverseRate::Finite(3.0);
        let t = 0.3;
        let p = fixed_point_profile(m, t, 400).unwrap();
        let hi = p.h_inf;
        assert!((-(hi * hi.ln()) / (1.0 - hi / 3.0) - t).abs() < 1e-12);
        assert!(p.h0.windows(2).all(|w| w[1] <= w[0]));
        assert!((p.h0[399] - hi).abs() < 1e-6);
        assert!(matches!(
            fixed_point_profile(m, 0.5, 4),
            Err(Error::NoFixedPoint { .. })
        ));
    }

    #[test]
    fn csv_layout() {
        let p = fixed_point_profile(InverseRate::Infinite, 0.3, 2).unwrap();
        let csv = p.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# T=0.300000000000,h_inf="));
        assert_eq!(lines[1], "i,h0_i");
        assert_eq!(lines.len(), 4);
    }
}

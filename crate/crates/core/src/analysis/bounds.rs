//! Closed-form delay bounds and reference profiles.

use super::InverseRate;
use crate::error::{Error, Result};

/// `M ln(M/(M-1))`, the normalized one-hop delay without erasures.
fn one_hop(m: InverseRate) -> f64 {
    match m {
        InverseRate::Infinite => 1.0,
        InverseRate::Finite(m) => m * (1.0 / (m - 1.0)).ln_1p(),
    }
}

/// `M ln((2M-1)/(2M-2))`, the per-hop increment after the first hop.
fn per_hop(m: InverseRate) -> f64 {
    match m {
        InverseRate::Infinite => 0.5,
        InverseRate::Finite(m) => m * (1.0 / (2.0 * m - 2.0)).ln_1p(),
    }
}

/// Upper bound on the normalized delay `(1-ε) T_n / k` to hop `n`, for
/// relays that start empty.
pub fn theorem1_bound(n: u32, m: InverseRate) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n", "hop index starts at 1"));
    }
    let m = m.check()?;
    Ok(one_hop(m) + f64::from(n - 1) * per_hop(m))
}

/// Asymptotic one-hop delay `M ln(M/(M-1)) / (1-ε)` in units of `k` slots.
pub fn one_hop_asymptote(m: InverseRate, erasure_prob: f64) -> Result<f64> {
    let m = m.check()?;
    if !(0.0..1.0).contains(&erasure_prob) {
        return Err(Error::invalid("epsilon", "must lie in [0, 1)"));
    }
    Ok(one_hop(m) / (1.0 - erasure_prob))
}

/// `h*_i = 1 / ((i+1) - i/M)`, with `h*_0 = M`.
pub fn h_star(i: u32, m: InverseRate) -> f64 {
    if i == 0 {
        return m.value();
    }
    let i = f64::from(i);
    1.0 / ((i + 1.0) - i * m.recip())
}

/// Ratio `h*_i / h*_{i-1}` for `i >= 2`. At `i = 1` the ratio is taken
/// against the unit decoding threshold rather than `h*_0 = M`, which is
/// what makes `r*_i = 1/(2 - r*_{i-1})` hold from `i = 2` on.
pub fn r_star(i: u32, m: InverseRate) -> Result<f64> {
    match i {
        0 => Err(Error::invalid("i", "ratio is defined for i >= 1")),
        1 => Ok(h_star(1, m)),
        _ => Ok(h_star(i, m) / h_star(i - 1, m)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const M3: InverseRate = InverseRate::Finite(3.0);

    #[test]
    fn theorem_one_values() {
        let frozen = [
            1.216_395_324_324_493,
            1.885_825_978_267_122,
            2.555_256_632_209_752,
            3.224_687_286_152_381,
            3.894_117_940_095_010,
        ];
        for (n, want) in (1..=5).zip(frozen) {
            assert!((theorem1_bound(n, M3).unwrap() - want).abs() < 1e-12);
        }
        assert!((per_hop(M3) - 0.669_430_653_942_629).abs() < 1e-12);
        assert!((theorem1_bound(3, InverseRate::Infinite).unwrap() - 2.0).abs() < 1e-15);
        assert!((per_hop(InverseRate::Finite(1e6)) - 0.5).abs() < 1e-6);
        assert!(theorem1_bound(0, M3).is_err());
        assert!(theorem1_bound(1, InverseRate::Finite(1.0)).is_err());
    }

    #[test]
    fn one_hop_values() {
        assert!((one_hop_asymptote(M3, 0.05).unwrap() - 1.280_416_130_867_888).abs() < 1e-12);
        assert!((one_hop_asymptote(M3, 0.0).unwrap() - 1.216_395_324_324_493).abs() < 1e-12);
        assert!((one_hop_asymptote(InverseRate::Finite(1e6), 0.0).unwrap() - 1.0).abs() < 1e-6);
        assert!(one_hop_asymptote(M3, 1.0).is_err());
    }

    #[test]
    fn h_star_values_and_ratio_recurrence() {
        assert_eq!(h_star(1, InverseRate::Infinite), 0.5);
        assert!((h_star(2, InverseRate::Infinite) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(h_star(0, M3), 3.0);
        assert!(h_star(0, InverseRate::Infinite).is_infinite());
        for m in [2.0, 3.0, 6.0, f64::INFINITY] {
            let m = InverseRate::new(m).unwrap();
            for i in 2..=50 {
                let lhs = r_star(i, m).unwrap();
                let rhs = 1.0 / (2.0 - r_star(i - 1, m).unwrap());
                assert!((lhs - rhs).abs() < 1e-12, "i={i} M={m}");
            }
        }
    }
}

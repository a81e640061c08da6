//! Counting lattice points `gλh` in metric balls of G.

use super::{extended_gcd, int_to_group};
use crate::error::{Error, Result};
use crate::group::GroupElement;

pub const COUNT_BUDGET: f64 = 1e8;

/// `#{λ ∈ SL₂(ℤ) : ρ(g λ h) < R}`.
///
/// `ρ(u) ≥ t(u)` and `‖λ‖_op ≤ ‖g⁻¹‖_op ‖u‖_op ‖h⁻¹‖_op`, so every such λ has
/// entries bounded by `B = e^{(t(g) + R + t(h))/2}`. First columns `(a, c)` are
/// enumerated in the box; the second columns with that first column form the
/// family `(b₀ + ka, d₀ + kc)`.
pub fn lattice_points_in_ball(r: f64, g: &GroupElement, h: &GroupElement) -> Result<u64> {
    if !(r >= 0.0) {
        return Err(Error::InvalidRadius(r));
    }
    let bound = (0.5 * (g.hyperbolic_displacement() + r + h.hyperbolic_displacement())).exp();
    let m = bound.floor() as i64;
    let side = (2 * m + 1) as f64;
    if side * side > COUNT_BUDGET {
        return Err(Error::BudgetExceeded {
            needed: side * side,
            budget: COUNT_BUDGET,
        });
    }
    let mut count = 0u64;
    for a in -m..=m {
        for c in -m..=m {
            let (gcd, s, t) = extended_gcd(a, c);
            if gcd != 1 {
                continue;
            }
            // a·s + c·t = 1 ⇒ (a, −t; c, s) ∈ SL₂(ℤ)
            let (b0, d0) = (-t, s);
            let (k_lo, k_hi) = family_range(b0, a, m).intersect(family_range(d0, c, m));
            for k in k_lo..=k_hi {
                let lam = [a, b0 + k * a, c, d0 + k * c];
                if g.mul_raw(&int_to_group(&lam)).mul_raw(h).displacement() < r {
                    count += 1;
                }
            }
        }
    }
    Ok(count)
}

#[derive(Clone, Copy)]
struct Range(i64, i64);

impl Range {
    fn intersect(self, o: Range) -> (i64, i64) {
        (self.0.max(o.0), self.1.min(o.1))
    }
}

/// `{k : |v + k·step| ≤ m}`.
fn family_range(v: i64, step: i64, m: i64) -> Range {
    if step == 0 {
        return if v.abs() <= m { Range(i64::MIN / 4, i64::MAX / 4) } else { Range(1, 0) };
    }
    let (lo, hi) = ((-m - v) as f64 / step as f64, (m - v) as f64 / step as f64);
    let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    Range(lo.ceil() as i64, hi.floor() as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::LieVector;

    // plain box enumeration of all integer matrices with entries ≤ m
    fn brute(r: f64, g: &GroupElement, h: &GroupElement, m: i64) -> u64 {
        let mut n = 0;
        for a in -m..=m {
            for b in -m..=m {
                for c in -m..=m {
                    for d in -m..=m {
                        if a * d - b * c == 1
                            && g.mul_raw(&int_to_group(&[a, b, c, d])).mul_raw(h).displacement() < r
                        {
                            n += 1;
                        }
                    }
                }
            }
        }
        n
    }

    #[test]
    fn tiny_ball_contains_only_identity() {
        let id = GroupElement::identity();
        assert_eq!(lattice_points_in_ball(0.1, &id, &id).unwrap(), 1);
        assert_eq!(brute(0.1, &id, &id, 3), 1);
    }

    #[test]
    fn matches_box_enumeration_and_is_monotone() {
        let g = LieVector::new(0.2, -0.3, 0.1).exp();
        let h = LieVector::new(-0.1, 0.2, 0.4).exp();
        let mut prev = 0;
        for r in [0.5, 1.0, 2.0, 3.0] {
            let n = lattice_points_in_ball(r, &g, &h).unwrap();
            assert_eq!(n, brute(r, &g, &h, 9), "R = {r}");
            assert!(n >= prev);
            prev = n;
        }
    }

    #[test]
    fn budget_is_enforced() {
        let g = GroupElement::diagonal(30.0);
        assert!(matches!(
            lattice_points_in_ball(5.0, &g, &g),
            Err(Error::BudgetExceeded { .. })
        ));
    }
}

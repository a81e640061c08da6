//! Quotient distance and injectivity radius.
//!
//! For any `λ ∈ Λ` the hyperbolic part of `ρ(g_p λ g_q⁻¹)` is
//! `t = d_H(λ⁻¹ z_p, z_q)` and `ρ ≥ t`. So once some feasible `λ` gives an
//! upper bound `D`, every competitor has `λ⁻¹` in the finite set
//! `{σ : d_H(σ z_p, z_q) ≤ D}`, which [`for_each_orbit_element`] enumerates
//! exactly through the bottom rows `(c, d)` of σ:
//!
//! * `Im σw = y_w/|cw + d|² ≥ y_z e^{−D}` bounds `|cw + d|`;
//! * the remaining freedom `σ = Tᵏσ₀` shifts `Re σw` by `k`, and
//!   `cosh d_H = 1 + |Δz|²/(2 y y')` bounds `|Δx|` by `√(2 y y' (cosh D − 1))`.
//!
//! Both `σ` and `−σ` are reported: they act identically on the half-plane
//! but differ on the θ fibre.

use std::f64::consts::PI;

use super::{extended_gcd, int_inverse, int_to_group, IntMatrix, SpacePoint};
use crate::group::GroupElement;

const SLACK: f64 = 1e-9;

/// Calls `f(σ)` for every `σ ∈ SL₂(ℤ)` with `d_H(σ·w, z) ≤ dmax` (up to a `1e-9` slack).
pub fn for_each_orbit_element<F: FnMut(IntMatrix)>(w: (f64, f64), z: (f64, f64), dmax: f64, mut f: F) {
    let (xw, yw) = w;
    let (xz, yz) = z;
    let dmax = dmax + SLACK;
    let bound = yw * dmax.exp() / yz;
    // cosh D − 1 without cancellation
    let cosh_m1 = 2.0 * (0.5 * dmax).sinh().powi(2);
    let c_max = (bound.sqrt() / yw).floor() as i64;
    for c in 0..=c_max {
        let cf = c as f64;
        let rest = bound - cf * cf * yw * yw;
        if rest < 0.0 {
            continue;
        }
        let (d_lo, d_hi) = if c == 0 {
            (1, 1)
        } else {
            let s = rest.sqrt();
            ((-cf * xw - s).ceil() as i64, (-cf * xw + s).floor() as i64)
        };
        for d in d_lo..=d_hi {
            let (g, s1, t1) = extended_gcd(d, c);
            if g != 1 {
                continue;
            }
            // s1·d + t1·c = 1, so (s1, −t1; c, d) has determinant one
            let (a, b) = (s1, -t1);
            let df = d as f64;
            let den = (cf * xw + df).powi(2) + cf * cf * yw * yw;
            let yp = yw / den;
            let xp = ((a as f64 * xw + b as f64) * (cf * xw + df) + a as f64 * cf * yw * yw) / den;
            let dx = (2.0 * yz * yp * cosh_m1).max(0.0).sqrt() + SLACK;
            let k_lo = (xz - xp - dx).ceil() as i64;
            let k_hi = (xz - xp + dx).floor() as i64;
            for k in k_lo..=k_hi {
                let s = [a + k * c, b + k * d, c, d];
                f(s);
                f(s.map(|v| -v));
            }
        }
    }
}

#[inline]
fn half_plane_point(p: &SpacePoint) -> (f64, f64) {
    (p.x(), p.y())
}

/// `min ρ(g_p λ g_q⁻¹)` over all λ with hyperbolic part at most `dmax`; `∞` if none.
fn min_over_orbit(p: &SpacePoint, q: &SpacePoint, dmax: f64) -> f64 {
    let gp = p.rep();
    let gq_inv = q.rep().inverse();
    let mut best = f64::INFINITY;
    for_each_orbit_element(half_plane_point(p), half_plane_point(q), dmax, |sigma| {
        let lam = int_to_group(&int_inverse(&sigma));
        let r = gp.mul_raw(&lam).mul_raw(&gq_inv).displacement();
        if r < best {
            best = r;
        }
    });
    best
}

/// `d_X(p, q) = min_λ ρ(g_p λ g_q⁻¹)`.
pub fn dist_x(p: &SpacePoint, q: &SpacePoint) -> f64 {
    let u = p.rep().mul_raw(&q.rep().inverse());
    let greedy = u.displacement().min(u.neg().displacement());
    min_over_orbit(p, q, greedy).min(greedy)
}

/// `Some(d_X(p, q))` when it is below `r`, otherwise `None`. Cheaper than
/// [`dist_x`] for small `r`.
pub fn dist_x_below(p: &SpacePoint, q: &SpacePoint, r: f64) -> Option<f64> {
    let d = min_over_orbit(p, q, r);
    (d < r).then_some(d)
}

/// Largest entry any minimizing λ can have: with `t(g_p λ g_q⁻¹) ≤ D`,
/// `λ = g_p⁻¹ u g_q` has entries at most `‖g_p⁻¹‖‖u‖‖g_q‖ ≤ e^{(t_p + D + t_q)/2}`
/// in operator norm.
pub fn entry_bound(p: &SpacePoint, q: &SpacePoint) -> f64 {
    let u = p.rep().mul_raw(&q.rep().inverse());
    let greedy = u.displacement().min(u.neg().displacement());
    let tp = p.rep().hyperbolic_displacement();
    let tq = q.rep().hyperbolic_displacement();
    (0.5 * (tp + tq + greedy)).exp()
}

/// `½ min_{λ ≠ I} ρ(g λ g⁻¹)`. The centre `−I` contributes `ρ(−I) = π`, so only
/// λ with hyperbolic part at most π can compete.
pub fn injectivity_radius(p: &SpacePoint) -> f64 {
    injectivity_radius_with_bound(p, PI)
}

/// Same as [`injectivity_radius`] with the enumeration cut off at hyperbolic
/// displacement `dmax` instead of π.
pub fn injectivity_radius_with_bound(p: &SpacePoint, dmax: f64) -> f64 {
    let g = p.rep();
    let g_inv = g.inverse();
    let z = half_plane_point(p);
    let mut best = PI;
    // t(g λ g⁻¹) = d_H(λ⁻¹ z, z)
    for_each_orbit_element(z, z, dmax, |sigma| {
        if sigma == [1, 0, 0, 1] {
            return;
        }
        let lam = int_to_group(&int_inverse(&sigma));
        let r = g.mul_raw(&lam).mul_raw(&g_inv).displacement();
        if r < best {
            best = r;
        }
    });
    0.5 * best
}

/// `ρ(g λ h)` for an integer λ.
#[inline]
pub fn displacement_with(g: &GroupElement, lam: &IntMatrix, h: &GroupElement) -> f64 {
    g.mul_raw(&int_to_group(lam)).mul_raw(h).displacement()
}

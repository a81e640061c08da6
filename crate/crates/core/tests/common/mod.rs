#![allow(dead_code)]

use homwalk::lattice::extended_gcd;
use homwalk::lattice::metric::entry_bound;
use homwalk::{GroupElement, SpacePoint};

/// `min ρ(g_p λ g_q⁻¹)` over every λ ∈ SL₂(ℤ) with entries at most `bound`.
pub fn brute_dist_with_bound(p: &SpacePoint, q: &SpacePoint, bound: i64) -> f64 {
    let gp = p.rep();
    let gq_inv = q.rep().inverse();
    let mut best = f64::INFINITY;
    for a in -bound..=bound {
        for c in -bound..=bound {
            let (g, s, t) = extended_gcd(a, c);
            if g != 1 {
                continue;
            }
            // a·s + c·t = 1, so (a, −t; c, s) is unimodular; others add k·(a, c)
            let (b0, d0) = (-t, s);
            let m = a.abs().max(c.abs());
            let k0 = -(b0.abs().max(d0.abs()) + bound) / m - 1;
            let k1 = (b0.abs().max(d0.abs()) + bound) / m + 1;
            for k in k0..=k1 {
                let (b, d) = (b0 + k * a, d0 + k * c);
                if b.abs() > bound || d.abs() > bound {
                    continue;
                }
                let lam = GroupElement::from_entries_unchecked([a as f64, b as f64, c as f64, d as f64]);
                let r = gp.mul_raw(&lam).mul_raw(&gq_inv).displacement();
                best = best.min(r);
            }
        }
    }
    best
}

/// Brute force with the minimizer's entry bound enlarged fourfold.
pub fn brute_dist(p: &SpacePoint, q: &SpacePoint) -> f64 {
    brute_dist_with_bound(p, q, (4.0 * entry_bound(p, q)).ceil() as i64)
}

/// Shortest nonzero vector of `g·ℤ²` over coefficients `‖v‖∞ ≤ box_size`.
pub fn brute_shortest(g: &GroupElement, box_size: i64) -> f64 {
    let [a, b, c, d] = g.entries();
    let mut best = f64::INFINITY;
    for m in -box_size..=box_size {
        for n in -box_size..=box_size {
            if m == 0 && n == 0 {
                continue;
            }
            let (mf, nf) = (m as f64, n as f64);
            best = best.min((a * mf + b * nf).hypot(c * mf + d * nf));
        }
    }
    best
}

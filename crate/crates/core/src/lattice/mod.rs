//! The quotient X = SL₂(ℝ)/SL₂(ℤ).
//!
//! A coset `gΛ` is the lattice spanned by the columns of `g`. We write
//! `g⁻¹ = n(x) a(y) k(θ)` and call `(x, y, θ)` the coordinates of `g`:
//! `z = x + iy = g⁻¹·i` transforms as `z ↦ λ⁻¹ z` under `g ↦ gλ`, so a
//! coset is represented by the unique `g` whose `z` lies in the standard
//! fundamental domain, with θ folded into `[0, π)` by the central `−I`.
//! With columns `v₁, v₂` of `g`, `y = 1/|v₁|²` and `x = −⟨v₁, v₂⟩/|v₁|²`,
//! so reducing `z` is Gauss reduction of the basis `(v₁, v₂)`.

pub mod counting;
pub mod haar;
pub mod index;
pub mod metric;
pub mod net;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::group::GroupElement;

pub use counting::lattice_points_in_ball;
pub use haar::{haar_point, haar_ball_volume, haar_sample, sample_ball, HaarSample};
pub use index::CosetIndex;
pub use metric::{dist_x, dist_x_below, injectivity_radius};
pub use net::net;

/// Lower edge of the fundamental domain, `√3/2`.
pub const Y_MIN: f64 = 0.866_025_403_784_438_6;

const MOVE_TOL: f64 = 1e-12;

/// An integer matrix of determinant one, row-major.
pub type IntMatrix = [i64; 4];

pub fn int_mul(p: &IntMatrix, q: &IntMatrix) -> IntMatrix {
    [
        p[0] * q[0] + p[1] * q[2],
        p[0] * q[1] + p[1] * q[3],
        p[2] * q[0] + p[3] * q[2],
        p[2] * q[1] + p[3] * q[3],
    ]
}

pub fn int_inverse(p: &IntMatrix) -> IntMatrix {
    [p[3], -p[1], -p[2], p[0]]
}

pub fn int_to_group(p: &IntMatrix) -> GroupElement {
    GroupElement::from_entries_unchecked([p[0] as f64, p[1] as f64, p[2] as f64, p[3] as f64])
}

/// `(g, a, b)` with `g = gcd(x, y) ≥ 0` and `a·x + b·y = g`.
pub fn extended_gcd(x: i64, y: i64) -> (i64, i64, i64) {
    let (mut r0, mut r1) = (x, y);
    let (mut s0, mut s1) = (1i64, 0i64);
    let (mut t0, mut t1) = (0i64, 1i64);
    while r1 != 0 {
        let q = r0.div_euclid(r1);
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if r0 < 0 {
        (-r0, -s0, -t0)
    } else {
        (r0, s0, t0)
    }
}

/// Height exponent: `ht(x) = max(1, s(x)^{−κ})` for shortest vector length `s(x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightParams {
    pub kappa: f64,
}

impl Default for HeightParams {
    fn default() -> Self {
        Self { kappa: 1.0 }
    }
}

impl HeightParams {
    /// Largest `y` with height at most `h`.
    pub fn y_for_height(&self, h: f64) -> f64 {
        h.max(1.0).powf(2.0 / self.kappa)
    }
}

/// A coset held as its reduced representative.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacePoint {
    rep: GroupElement,
    x: f64,
    y: f64,
    theta: f64,
}

/// Coordinates `(x, y, θ)` of `g` as defined in the module docs, θ ∈ (−π, π].
pub fn coordinates(g: &GroupElement) -> (f64, f64, f64) {
    let [a, b, c, d] = g.entries();
    let n1 = a * a + c * c;
    (-(a * b + c * d) / n1, g.det() / n1, (-c).atan2(a))
}

/// Gauss reduction of the columns of `g`: returns `(g·λ, λ)`.
pub fn reduce_with_witness(g: &GroupElement) -> (SpacePoint, IntMatrix) {
    let [a, b, c, d] = g.entries();
    let (mut v1, mut v2) = ([a, c], [b, d]);
    let mut lam: IntMatrix = [1, 0, 0, 1];
    loop {
        let n1 = v1[0] * v1[0] + v1[1] * v1[1];
        let ratio = (v1[0] * v2[0] + v1[1] * v2[1]) / n1;
        if ratio.abs() > 0.5 + MOVE_TOL {
            let k = ratio.round();
            v2 = [v2[0] - k * v1[0], v2[1] - k * v1[1]];
            let ki = k as i64;
            lam = int_mul(&lam, &[1, -ki, 0, 1]);
        }
        let n2 = v2[0] * v2[0] + v2[1] * v2[1];
        if n2 < n1 * (1.0 - MOVE_TOL) {
            // g·S with S = (0, −1; 1, 0) maps columns (v₁, v₂) to (v₂, −v₁)
            (v1, v2) = (v2, [-v1[0], -v1[1]]);
            lam = int_mul(&lam, &[0, -1, 1, 0]);
        } else {
            break;
        }
    }
    let mut rep = GroupElement::from_entries_unchecked([v1[0], v2[0], v1[1], v2[1]]);
    if !(0.0..PI).contains(&coordinates(&rep).2) {
        // −I ∈ Λ: the negated basis sits at θ + π
        rep = rep.neg();
        lam = lam.map(|v| -v);
    }
    let (x, y, theta) = coordinates(&rep);
    (SpacePoint { rep, x, y, theta }, lam)
}

pub fn reduce(g: &GroupElement) -> SpacePoint {
    reduce_with_witness(g).0
}

impl SpacePoint {
    pub fn identity_coset() -> Self {
        reduce(&GroupElement::identity())
    }

    /// The coset with coordinates `(x, y, θ)`, reduced.
    pub fn from_coordinates(x: f64, y: f64, theta: f64) -> Self {
        reduce(&element_with_coordinates(x, y, theta))
    }

    #[inline]
    pub fn rep(&self) -> &GroupElement {
        &self.rep
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.x
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.y
    }

    #[inline]
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn coords(&self) -> (f64, f64, f64) {
        (self.x, self.y, self.theta)
    }

    /// Length of the shortest nonzero vector of the lattice; the first reduced column.
    pub fn shortest_vector(&self) -> f64 {
        self.y.sqrt().recip()
    }

    pub fn height(&self, params: &HeightParams) -> f64 {
        // s^{−κ} = y^{κ/2}
        self.y.powf(0.5 * params.kappa).max(1.0)
    }

    /// `g·x`, reduced.
    pub fn translate(&self, g: &GroupElement) -> SpacePoint {
        reduce(&(g * &self.rep))
    }

    pub fn satisfies_reduction(&self, tol: f64) -> bool {
        self.x.abs() <= 0.5 + tol
            && self.x * self.x + self.y * self.y >= 1.0 - tol
            && (0.0..PI).contains(&self.theta)
    }
}

/// `g = k(−θ)·a_y⁻¹·n(−x)`, so that `g⁻¹ = n(x) a_y k(θ)`.
pub fn element_with_coordinates(x: f64, y: f64, theta: f64) -> GroupElement {
    GroupElement::from_iwasawa(x, y, theta).inverse()
}

pub fn height(p: &SpacePoint, params: &HeightParams) -> f64 {
    p.height(params)
}

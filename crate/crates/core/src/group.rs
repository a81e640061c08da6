//! Arithmetic and geometry on G = SL₂(ℝ).
//!
//! Elements are stored as four doubles (row-major). Products renormalize by
//! `1/√det` once the determinant drifts more than [`DET_RENORM_THRESHOLD`]
//! from one.
//!
//! The right-invariant metric is `d(g, h) = ρ(g h⁻¹)` where, for
//! `u = k(θ₁) a(t) k(θ₂)`,
//!
//! ```text
//! ρ(u) = √(t² + Q(u)²),   Q(u) = min(π, |θ₁ + θ₂|_{(-π,π]} + asin(tanh(t/2)))
//! ```
//!
//! `t` is the hyperbolic displacement of `i` and `Q` is the largest angle by
//! which `u` turns a direction of ℝ². Both are symmetric and subadditive
//! (`t` by the triangle inequality in the hyperbolic plane, `Q` by the
//! triangle inequality on the circle of directions), so `ρ` defines a genuine
//! right-invariant metric with `ρ(−I) = π`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Mul;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Determinant drift above which products are renormalized.
pub const DET_RENORM_THRESHOLD: f64 = 1e-12;

/// Radius (Frobenius norm of `g − I`) of the principal logarithm domain.
pub const LOG_DOMAIN_RADIUS: f64 = 0.5;

/// A 2×2 real matrix of unit determinant.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupElement {
    m: [f64; 4],
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.m;
        write!(f, "[[{a}, {b}], [{c}, {d}]]")
    }
}

impl Default for GroupElement {
    fn default() -> Self {
        Self::identity()
    }
}

impl GroupElement {
    pub const fn identity() -> Self {
        Self { m: [1.0, 0.0, 0.0, 1.0] }
    }

    /// Builds an element from row-major entries, renormalizing a determinant
    /// within `1e-6` of one. Anything further off is rejected.
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let det = a * d - b * c;
        if !det.is_finite() || (det - 1.0).abs() > 1e-6 {
            return Err(Error::NotUnimodular { det });
        }
        Ok(Self::from_entries_unchecked([a, b, c, d]).renormalized())
    }

    /// Wraps entries without checking the determinant.
    #[inline]
    pub const fn from_entries_unchecked(m: [f64; 4]) -> Self {
        Self { m }
    }

    #[inline]
    pub fn entries(&self) -> [f64; 4] {
        self.m
    }

    #[inline]
    pub fn det(&self) -> f64 {
        self.m[0] * self.m[3] - self.m[1] * self.m[2]
    }

    /// E12(t) = (1, t; 0, 1).
    pub fn upper_unipotent(t: f64) -> Self {
        Self { m: [1.0, t, 0.0, 1.0] }
    }

    /// E21(t) = (1, 0; t, 1).
    pub fn lower_unipotent(t: f64) -> Self {
        Self { m: [1.0, 0.0, t, 1.0] }
    }

    /// k(θ) = (cos θ, −sin θ; sin θ, cos θ).
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self { m: [c, -s, s, c] }
    }

    /// a(t) = diag(e^{t/2}, e^{−t/2}).
    pub fn diagonal(t: f64) -> Self {
        let e = (0.5 * t).exp();
        Self { m: [e, 0.0, 0.0, 1.0 / e] }
    }

    /// n(x)·diag(√y, 1/√y)·k(θ), the element whose action sends `i` to `x + iy`.
    pub fn from_iwasawa(x: f64, y: f64, theta: f64) -> Self {
        let sy = y.sqrt();
        let (s, c) = theta.sin_cos();
        // n(x) a(y) = (√y, x/√y; 0, 1/√y)
        let (p, q, r) = (sy, x / sy, 1.0 / sy);
        Self {
            m: [p * c + q * s, -p * s + q * c, r * s, r * c],
        }
    }

    /// Iwasawa coordinates `(x, y, θ)` with `self = n(x) a(y) k(θ)`, θ ∈ (−π, π].
    pub fn iwasawa(&self) -> (f64, f64, f64) {
        let [a, b, c, d] = self.m;
        let n2 = c * c + d * d;
        let x = (a * c + b * d) / n2;
        let y = self.det() / n2;
        let theta = c.atan2(d);
        (x, y, theta)
    }

    #[inline]
    pub fn inverse(&self) -> Self {
        let [a, b, c, d] = self.m;
        Self { m: [d, -b, -c, a] }
    }

    #[inline]
    pub fn neg(&self) -> Self {
        let [a, b, c, d] = self.m;
        Self { m: [-a, -b, -c, -d] }
    }

    /// Product without renormalization.
    #[inline]
    pub fn mul_raw(&self, rhs: &Self) -> Self {
        let [a, b, c, d] = self.m;
        let [e, f, g, h] = rhs.m;
        Self {
            m: [a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h],
        }
    }

    /// Divides by `√det` when the determinant has drifted past the threshold.
    #[inline]
    pub fn renormalized(self) -> Self {
        let det = self.det();
        if (det - 1.0).abs() > DET_RENORM_THRESHOLD && det > 0.0 {
            let s = 1.0 / det.sqrt();
            let [a, b, c, d] = self.m;
            Self { m: [a * s, b * s, c * s, d * s] }
        } else {
            self
        }
    }

    /// Matrix of `X ↦ g X g⁻¹` in the basis (H, E, F); `ad[i][j]` is row i, column j.
    pub fn adjoint(&self) -> [[f64; 3]; 3] {
        let [a, b, c, d] = self.m;
        // columns are the images of H, E, F
        [
            [a * d + b * c, -a * c, b * d],
            [-2.0 * a * b, a * a, -b * b],
            [2.0 * c * d, -c * c, d * d],
        ]
    }

    /// max_{ij} { |Ad(g)_ij|, |Ad(g⁻¹)_ij| }.
    pub fn norm(&self) -> f64 {
        let fwd = self.adjoint();
        let bwd = self.inverse().adjoint();
        fwd.iter()
            .chain(bwd.iter())
            .flat_map(|row| row.iter())
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Operator 2-norm of the matrix itself, `e^{t/2}` for Cartan parameter t.
    pub fn operator_norm(&self) -> f64 {
        let (_, r, z0) = self.svd_parts();
        z0 + r
    }

    pub fn frobenius_distance_to_identity(&self) -> f64 {
        let [a, b, c, d] = self.m;
        ((a - 1.0).powi(2) + b * b + c * c + (d - 1.0).powi(2)).sqrt()
    }

    /// Principal logarithm, defined on `‖g − I‖_F < 0.5`.
    pub fn log(&self) -> Result<LieVector> {
        let dist = self.frobenius_distance_to_identity();
        if dist >= LOG_DOMAIN_RADIUS {
            return Err(Error::LogDomain { distance: dist });
        }
        let [a, b, c, d] = self.m;
        let q = 0.5 * (a + d);
        let u = q - 1.0;
        // g = c0 I + c1 X with c0 = cosh s (or cos s), X = (g − qI)·s/sinh s.
        let factor = if u.abs() < 1e-4 {
            1.0 - u / 3.0 + 2.0 * u * u / 15.0
        } else if q > 1.0 {
            let s = q.acosh();
            s / (q * q - 1.0).sqrt()
        } else {
            let s = q.acos();
            s / (1.0 - q * q).sqrt()
        };
        Ok(LieVector::new(0.5 * (a - d) * factor, b * factor, c * factor))
    }

    /// Cartan (KAK) decomposition from the closed-form 2×2 singular value decomposition.
    pub fn cartan(&self) -> CartanTriple {
        let [a, b, c, d] = self.m;
        let e = 0.5 * (a + d);
        let f = 0.5 * (a - d);
        let g = 0.5 * (c + b);
        let h = 0.5 * (c - b);
        let q = e.hypot(h);
        let r = f.hypot(g);
        let a1 = if r > 0.0 { g.atan2(f) } else { 0.0 };
        let a2 = h.atan2(e);
        // σ_max/σ_min = (q + r)/(q − r) with q² − r² = det
        let det = (q * q - r * r).max(f64::MIN_POSITIVE);
        let t = 2.0 * (r / det.sqrt()).asinh();
        CartanTriple {
            k1_angle: 0.5 * (a2 + a1),
            a_param: t,
            k2_angle: 0.5 * (a2 - a1),
        }
    }

    /// (rotation angle in (−π, π], R, |z₀|) from the SVD parametrization.
    #[inline]
    fn svd_parts(&self) -> (f64, f64, f64) {
        let [a, b, c, d] = self.m;
        let e = 0.5 * (a + d);
        let f = 0.5 * (a - d);
        let g = 0.5 * (c + b);
        let h = 0.5 * (c - b);
        (h.atan2(e), f.hypot(g), e.hypot(h))
    }

    /// Hyperbolic displacement `t = d_H(i, g·i)`.
    #[inline]
    pub fn hyperbolic_displacement(&self) -> f64 {
        let (_, r, z0) = self.svd_parts();
        // z0² − r² = det = 1, so σ_max = z0 + r = e^{asinh(r/√det)}
        let det = (z0 * z0 - r * r).max(f64::MIN_POSITIVE);
        2.0 * (r / det.sqrt()).asinh()
    }

    /// Largest angle by which `g` turns a direction of ℝ², in [0, π].
    #[inline]
    pub fn angular_displacement(&self) -> f64 {
        let (rot, r, z0) = self.svd_parts();
        let spread = (r / z0).min(1.0).asin();
        (rot.abs() + spread).min(PI)
    }

    /// ρ(g) = d(g, I).
    #[inline]
    pub fn displacement(&self) -> f64 {
        let (rot, r, z0) = self.svd_parts();
        let det = (z0 * z0 - r * r).max(f64::MIN_POSITIVE);
        let t = 2.0 * (r / det.sqrt()).asinh();
        let q = (rot.abs() + (r / z0).min(1.0).asin()).min(PI);
        t.hypot(q)
    }

    /// Right-invariant distance ρ(g h⁻¹).
    #[inline]
    pub fn dist(&self, other: &Self) -> f64 {
        self.mul_raw(&other.inverse()).displacement()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    pub fn max_entry_diff(&self, other: &Self) -> f64 {
        self.m
            .iter()
            .zip(other.m.iter())
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()))
    }

    /// Apply the Möbius action to a point of the upper half-plane.
    pub fn act_on_half_plane(&self, x: f64, y: f64) -> (f64, f64) {
        let [a, b, c, d] = self.m;
        // (a z + b) / (c z + d)
        let den_re = c * x + d;
        let den_im = c * y;
        let num_re = a * x + b;
        let num_im = a * y;
        let den2 = den_re * den_re + den_im * den_im;
        (
            (num_re * den_re + num_im * den_im) / den2,
            self.det() * y / den2,
        )
    }
}

impl Mul for GroupElement {
    type Output = GroupElement;

    #[inline]
    fn mul(self, rhs: Self) -> Self {
        self.mul_raw(&rhs).renormalized()
    }
}

impl Mul<&GroupElement> for &GroupElement {
    type Output = GroupElement;

    #[inline]
    fn mul(self, rhs: &GroupElement) -> GroupElement {
        self.mul_raw(rhs).renormalized()
    }
}

/// An element `hH + eE + fF` of sl₂(ℝ) in the basis H = (1,0;0,−1), E = (0,1;0,0), F = (0,0;1,0).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LieVector {
    pub coefficients: [f64; 3],
}

impl LieVector {
    pub const fn new(h: f64, e: f64, f: f64) -> Self {
        Self { coefficients: [h, e, f] }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let [h, e, f] = self.coefficients;
        Self::new(s * h, s * e, s * f)
    }

    /// Euclidean norm of the coefficient vector.
    pub fn norm(&self) -> f64 {
        let [h, e, f] = self.coefficients;
        (h * h + e * e + f * f).sqrt()
    }

    pub fn normalized(&self) -> Self {
        self.scaled(1.0 / self.norm())
    }

    /// Closed-form exponential. `X² = (h² + ef) I`, so
    /// `exp X = C(δ) I + S(δ) X` with `C(δ) = Σ δᵏ/(2k)!`, `S(δ) = Σ δᵏ/(2k+1)!`.
    pub fn exp(&self) -> GroupElement {
        let [h, e, f] = self.coefficients;
        let delta = h * h + e * f;
        let (c0, c1) = if delta.abs() < 1e-3 {
            let d2 = delta * delta;
            (
                1.0 + delta / 2.0 + d2 / 24.0 + d2 * delta / 720.0 + d2 * d2 / 40320.0,
                1.0 + delta / 6.0 + d2 / 120.0 + d2 * delta / 5040.0 + d2 * d2 / 362880.0,
            )
        } else if delta > 0.0 {
            let s = delta.sqrt();
            (s.cosh(), s.sinh() / s)
        } else {
            let s = (-delta).sqrt();
            (s.cos(), s.sin() / s)
        };
        GroupElement::from_entries_unchecked([c0 + c1 * h, c1 * e, c1 * f, c0 - c1 * h])
            .renormalized()
    }

    /// First-order size of `exp(sX)` in the metric: `d(exp(sX), I) = s·metric_norm(X) + O(s³)`.
    pub fn metric_norm(&self) -> f64 {
        let [h, e, f] = self.coefficients;
        let tau = (4.0 * h * h + (e + f) * (e + f)).sqrt();
        let omega = 0.5 * (f - e).abs();
        tau.hypot(omega + 0.5 * tau)
    }
}

/// `g = k(k1_angle) · a(a_param) · k(k2_angle)` with `a(t) = diag(e^{t/2}, e^{−t/2})`, t ≥ 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CartanTriple {
    pub k1_angle: f64,
    pub a_param: f64,
    pub k2_angle: f64,
}

impl CartanTriple {
    pub fn compose(&self) -> GroupElement {
        GroupElement::rotation(self.k1_angle)
            .mul_raw(&GroupElement::diagonal(self.a_param))
            .mul_raw(&GroupElement::rotation(self.k2_angle))
    }

    /// Total rotation `k1 + k2` folded to [0, π].
    pub fn folded_rotation(&self) -> f64 {
        let r = (self.k1_angle + self.k2_angle).rem_euclid(2.0 * PI);
        r.min(2.0 * PI - r)
    }
}

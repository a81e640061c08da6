//! Bounded Lipschitz test functions on X and their Haar integrals.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lattice::{dist_x_below, haar_sample, SpacePoint};
use crate::rng::Seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// `max(0, 1 − d_X(x, c)/radius)`.
    Bump { center: [f64; 3], radius: f64 },
    /// `ψ(y)·cos(2π k_x x + 2 k_θ θ)` with `ψ(y) = sin²(π k_y ln y / ln y_top)`
    /// on `1 ≤ y ≤ y_top` and 0 elsewhere. ψ vanishes below `y = 1`, which
    /// contains the arc identified by `z ↦ −1/z`, so f is well defined on X.
    IwasawaSmooth { frequency: [i32; 3], y_top: f64 },
    Constant { value: f64 },
}

impl TestFunction {
    pub fn bump(center: &SpacePoint, radius: f64) -> Self {
        let (x, y, t) = center.coords();
        TestFunction::Bump {
            center: [x, y, t],
            radius,
        }
    }

    pub fn eval(&self, p: &SpacePoint) -> f64 {
        match self {
            TestFunction::Bump { center, radius } => {
                let c = SpacePoint::from_coordinates(center[0], center[1], center[2]);
                dist_x_below(p, &c, *radius).map_or(0.0, |d| 1.0 - d / radius)
            }
            TestFunction::IwasawaSmooth { frequency, y_top } => {
                let [kx, ky, kt] = *frequency;
                let y = p.y();
                if !(1.0..=*y_top).contains(&y) {
                    return 0.0;
                }
                let u = y.ln() / y_top.ln();
                let psi = (PI * ky as f64 * u).sin().powi(2);
                psi * (2.0 * PI * kx as f64 * p.x() + 2.0 * kt as f64 * p.theta()).cos()
            }
            TestFunction::Constant { value } => *value,
        }
    }

    /// Lipschitz constant for `d_X`. For the Iwasawa functions it adds the
    /// partial bounds: `|Δ ln y|, |Δθ| ≤ d` and `|Δx| ≤ y·d` to first order.
    pub fn lipschitz_bound(&self) -> f64 {
        match self {
            TestFunction::Bump { radius, .. } => 1.0 / radius,
            TestFunction::IwasawaSmooth { frequency, y_top } => {
                let [kx, ky, kt] = *frequency;
                PI * ky.abs() as f64 / y_top.ln() + 2.0 * PI * kx.abs() as f64 * y_top + 2.0 * kt.abs() as f64
            }
            TestFunction::Constant { .. } => 0.0,
        }
    }

    /// Height above which f vanishes.
    fn support_top(&self) -> f64 {
        match self {
            TestFunction::Bump { center, radius } => center[1] * radius.exp() * 1.01,
            TestFunction::IwasawaSmooth { y_top, .. } => *y_top,
            TestFunction::Constant { .. } => f64::INFINITY,
        }
    }
}

/// Haar integral with its Monte Carlo standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HaarIntegral {
    pub value: f64,
    pub se: f64,
}

pub const QUADRATURE_SAMPLES: usize = 1_000_000;

/// `∫ f dm_X` for the Haar probability measure, from `samples` truncated Haar
/// points; f vanishes above the truncation so the deficit enters as a factor.
/// Cached on (function, samples, seed).
pub fn haar_integral(f: &TestFunction, samples: usize, seed: Seed) -> HaarIntegral {
    if let TestFunction::Constant { value } = f {
        return HaarIntegral { value: *value, se: 0.0 };
    }
    static CACHE: OnceLock<Mutex<HashMap<String, HaarIntegral>>> = OnceLock::new();
    let key = format!("{}|{samples}|{:?}", serde_json::to_string(f).unwrap_or_default(), seed);
    let cache = CACHE.get_or_init(Default::default);
    if let Some(v) = cache.lock().unwrap().get(&key) {
        return *v;
    }
    let sample = haar_sample(samples, f.support_top().max(2.0), seed);
    let vals: Vec<f64> = sample.points.par_iter().map(|p| f.eval(p)).collect();
    let (m, se) = super::stats::mean_se(&vals);
    let keep = 1.0 - sample.truncation_deficit;
    let out = HaarIntegral {
        value: m * keep,
        se: se * keep,
    };
    cache.lock().unwrap().insert(key, out);
    out
}

/// A mixed family: `bumps` bumps of radius 0.6–1.0 centred at Haar points of
/// `{y ≤ 2}`, then Iwasawa functions with frequencies cycling through a fixed list.
pub fn standard_test_functions(bumps: usize, smooth: usize, seed: Seed) -> Vec<TestFunction> {
    let centres = haar_sample(bumps, 2.0, seed).points;
    let mut out: Vec<TestFunction> = centres
        .iter()
        .enumerate()
        .map(|(i, c)| TestFunction::bump(c, 0.6 + 0.4 * (i % 5) as f64 / 4.0))
        .collect();
    const FREQ: [[i32; 3]; 5] = [[0, 1, 0], [1, 1, 0], [0, 1, 1], [1, 2, 1], [0, 2, 0]];
    out.extend((0..smooth).map(|i| TestFunction::IwasawaSmooth {
        frequency: FREQ[i % FREQ.len()],
        y_top: 3.0,
    }));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{dist_x, haar_point, sample_ball};

    #[test]
    fn bounded_and_lipschitz_on_random_pairs() {
        let fs = standard_test_functions(5, 5, Seed::new(3));
        let mut rng = Seed::new(4).rng();
        for i in 0..10_000 {
            let p = haar_point(&mut rng, 6.0);
            let q = if i % 2 == 0 {
                let delta = [0.01, 0.1, 0.5, 1.5][i / 2 % 4];
                p.translate(&sample_ball(&mut rng, delta))
            } else {
                haar_point(&mut rng, 6.0)
            };
            let d = dist_x(&p, &q);
            for f in &fs {
                let (a, b) = (f.eval(&p), f.eval(&q));
                assert!(a.abs() <= 1.0 && b.abs() <= 1.0);
                assert!((a - b).abs() <= f.lipschitz_bound() * d + 1e-12, "{f:?} d = {d}");
            }
        }
    }

    #[test]
    fn bump_integral_is_a_ball_average() {
        // a bump inside an embedded ball integrates to the cone volume over m_G(B_s)
        let c = SpacePoint::from_coordinates(0.0, 1.3, 1.0);
        let radius = 0.9 * crate::lattice::injectivity_radius(&c);
        let f = TestFunction::bump(&c, radius);
        let got = haar_integral(&f, 400_000, Seed::new(5));
        // ∫_0^R (1 − s/R) dV(s) by finite differences of the ball volume
        let vol = |r: f64| crate::lattice::haar_ball_volume(r);
        let steps = 40;
        let mut cone = 0.0;
        for k in 0..steps {
            let (a, b) = (radius * k as f64 / steps as f64, radius * (k + 1) as f64 / steps as f64);
            let va = if k == 0 { 0.0 } else { vol(a) };
            cone += (vol(b) - va) * (1.0 - 0.5 * (a + b) / radius);
        }
        let expect = cone / crate::lattice::haar::VOLUME_X;
        assert!((got.value - expect).abs() < 4.0 * got.se + 0.02 * expect, "{got:?} vs {expect}");
    }

    #[test]
    fn smooth_functions_integrate_to_zero_when_oscillating() {
        let f = TestFunction::IwasawaSmooth {
            frequency: [1, 1, 0],
            y_top: 3.0,
        };
        let got = haar_integral(&f, 200_000, Seed::new(6));
        assert!(got.value.abs() < 4.0 * got.se, "{got:?}");
        let g = TestFunction::IwasawaSmooth {
            frequency: [0, 1, 0],
            y_top: 3.0,
        };
        // ∫_1^3 sin²(π ln y/ln 3) dy/y² · (3/π) by quadrature
        let n = 200_000;
        let exact: f64 = (0..n)
            .map(|i| {
                let y = 1.0 + 2.0 * (i as f64 + 0.5) / n as f64;
                (PI * y.ln() / 3f64.ln()).sin().powi(2) / (y * y) * 2.0 / n as f64
            })
            .sum::<f64>()
            * 3.0
            / PI;
        let got = haar_integral(&g, 200_000, Seed::new(6));
        assert!((got.value - exact).abs() < 4.0 * got.se, "{got:?} vs {exact}");
    }
}

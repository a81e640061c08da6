//! Random products `Z_n ⋯ Z₁` acting on X, and breadth-first orbit enumeration.

mod bfs;

pub use bfs::{orbit_ball_bfs, BfsConfig, BfsLayer, BfsResult, DEFAULT_NODE_BUDGET};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::group::GroupElement;
use crate::lattice::{reduce, HeightParams, SpacePoint};
use crate::measures::FiniteSupportMeasure;
use crate::rng::Seed;

/// Inverse-CDF selection of atoms.
#[derive(Clone, Debug)]
pub struct AtomSampler {
    elements: Vec<GroupElement>,
    cumulative: Vec<f64>,
}

impl AtomSampler {
    pub fn new(mu: &FiniteSupportMeasure) -> Self {
        Self {
            elements: mu.atoms().iter().map(|(g, _)| *g).collect(),
            cumulative: mu.cumulative(),
        }
    }

    /// Index of the atom selected by `u ∈ [0, 1)`.
    pub fn index_for(&self, u: f64) -> usize {
        self.cumulative.partition_point(|&c| c <= u).min(self.elements.len() - 1)
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        self.index_for(rng.gen::<f64>())
    }

    pub fn element(&self, i: usize) -> &GroupElement {
        &self.elements[i]
    }

    /// `Y_k = reduce(Z_k · rep(Y_{k−1}))` for one step.
    pub fn step(&self, i: usize, p: &SpacePoint) -> SpacePoint {
        reduce(&self.elements[i].mul_raw(p.rep()).renormalized())
    }

    /// The point `Z_n ⋯ Z₁ x` for freshly drawn `Z_i`.
    pub fn endpoint<R: Rng>(&self, x: &SpacePoint, n: usize, rng: &mut R) -> SpacePoint {
        let mut p = *x;
        for _ in 0..n {
            let i = self.draw(rng);
            p = self.step(i, &p);
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start: SpacePoint,
    pub increments: Vec<u32>,
    pub points: Option<Vec<SpacePoint>>,
    pub heights: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// Recomputes `Y_0, …, Y_n` from the increments.
    pub fn replay(&self, mu: &FiniteSupportMeasure) -> Vec<SpacePoint> {
        let sampler = AtomSampler::new(mu);
        let mut out = Vec::with_capacity(self.increments.len() + 1);
        let mut p = self.start;
        out.push(p);
        for &i in &self.increments {
            p = sampler.step(i as usize, &p);
            out.push(p);
        }
        out
    }

    /// Caches heights of the cached points (replaying them if needed).
    pub fn with_heights(mut self, mu: &FiniteSupportMeasure, params: &HeightParams) -> Self {
        let points = self.points.take().unwrap_or_else(|| self.replay(mu));
        self.heights = Some(points.iter().map(|p| p.height(params)).collect());
        self.points = Some(points);
        self
    }
}

/// Samples `Y_0 = x0, …, Y_n` with the generator `seed.rng()`; points are cached.
pub fn sample_trajectory(mu: &FiniteSupportMeasure, x0: &SpacePoint, n: usize, seed: Seed) -> Trajectory {
    let sampler = AtomSampler::new(mu);
    let mut rng = seed.rng();
    let mut increments = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n + 1);
    let mut p = *x0;
    points.push(p);
    for _ in 0..n {
        let i = sampler.draw(&mut rng);
        increments.push(i as u32);
        p = sampler.step(i, &p);
        points.push(p);
    }
    Trajectory {
        start: *x0,
        increments,
        points: Some(points),
        heights: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::dist_x;
    use crate::measures::generator_presets;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn trivial_trajectories() {
        let mu = generator_presets("unipotents-rot35", 1.0).unwrap();
        let x0 = SpacePoint::identity_coset();
        let t = sample_trajectory(&mu, &x0, 0, Seed::new(1));
        assert_eq!(t.points.as_deref(), Some(&[x0][..]));

        let g = GroupElement::upper_unipotent(0.3).mul_raw(&GroupElement::diagonal(0.2));
        let dirac = FiniteSupportMeasure::dirac(g);
        let t = sample_trajectory(&dirac, &x0, 12, Seed::new(2));
        let mut power = GroupElement::identity();
        for (k, p) in t.points.unwrap().iter().enumerate() {
            assert!(dist_x(p, &reduce(&power)) < 1e-9, "step {k}");
            power = g.mul_raw(&power);
        }
    }

    #[test]
    fn replay_and_determinism() {
        let mu = generator_presets("unipotents-rot35", 1.0).unwrap();
        let x0 = SpacePoint::from_coordinates(0.1, 1.7, 0.4);
        let a = sample_trajectory(&mu, &x0, 500, Seed::new(9).with_stream(3));
        let b = sample_trajectory(&mu, &x0, 500, Seed::new(9).with_stream(3));
        assert_eq!(a, b);
        assert_eq!(a.replay(&mu), a.points.clone().unwrap());
        let c = sample_trajectory(&mu, &x0, 500, Seed::new(9).with_stream(4));
        assert_ne!(a.increments, c.increments);
    }

    #[test]
    fn inverse_cdf_selection() {
        let g = GroupElement::identity();
        let mu = FiniteSupportMeasure::new(
            vec![(g, 0.25), (GroupElement::diagonal(1.0), 0.5), (GroupElement::rotation(1.0), 0.25)],
            1e-9,
        )
        .unwrap();
        let s = AtomSampler::new(&mu);
        let cum = mu.cumulative();
        for (i, c) in cum.iter().enumerate().take(cum.len() - 1) {
            assert_eq!(s.index_for(c - 1e-12), i);
            assert_eq!(s.index_for(*c), i + 1);
        }
        assert_eq!(s.index_for(0.0), 0);
        assert_eq!(s.index_for(1.0 - 1e-16), 2);
    }

    #[test]
    fn second_step_matches_exact_convolution() {
        let mu = generator_presets("unipotents-rot35", 1.0).unwrap();
        let x0 = SpacePoint::identity_coset();
        let exact = mu.power(2).unwrap().pushforward(&x0);
        let sampler = AtomSampler::new(&mu);
        let trials = 100_000;
        let mut counts = vec![0u64; exact.len()];
        for t in 0..trials {
            let p = sampler.endpoint(&x0, 2, &mut Seed::new(77).with_stream(t).rng());
            let j = exact
                .iter()
                .position(|(q, _)| dist_x(&p, q) < 1e-7)
                .expect("endpoint outside the exact support");
            counts[j] += 1;
        }
        let chi2: f64 = exact
            .iter()
            .zip(&counts)
            .map(|((_, w), &c)| {
                let e = w * trials as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        let dof = (exact.len() - 1) as f64;
        let p = 1.0 - ChiSquared::new(dof).unwrap().cdf(chi2);
        assert!(p > 1e-3, "χ² = {chi2} on {dof} dof, p = {p}");
    }

    fn lag_cross(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn streams_are_uncorrelated() {
        let mu = generator_presets("unipotents-rot35", 1.0).unwrap();
        let x0 = SpacePoint::identity_coset();
        let params = HeightParams::default();
        let n = 10_000;
        let seq = |s: u64| {
            sample_trajectory(&mu, &x0, n, Seed::new(5).with_stream(s))
                .with_heights(&mu, &params)
                .heights
                .unwrap()
        };
        let (a, b) = (seq(0), seq(1));
        let centred = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let c: Vec<f64> = v.iter().map(|x| x - m).collect();
            let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            c.into_iter().map(|x| x / norm).collect::<Vec<f64>>()
        };
        let (a, b) = (centred(&a), centred(&b));
        let lag = |v: &[f64], k: usize| v.iter().zip(&v[k..]).map(|(x, y)| x * y).sum::<f64>();
        let corr = lag_cross(&a, &b);
        // heights are strongly autocorrelated; Bartlett's formula gives the null variance
        let var = (1.0 + 2.0 * (1..100).map(|k| lag(&a, k) * lag(&b, k)).sum::<f64>()) / n as f64;
        assert!(corr.abs() < 3.0 * var.sqrt(), "{corr} vs σ = {}", var.sqrt());
    }
}

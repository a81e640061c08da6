//! Hitting a fixed ball, and effective density of whole trajectories.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ols, ordered_sums, wilson, ExperimentReport, Table, Verdict};
use crate::error::{Error, Result};
use crate::lattice::net::{net_index, DEFAULT_FILL_PATIENCE};
use crate::lattice::{dist_x_below, HeightParams, SpacePoint};
use crate::measures::FiniteSupportMeasure;
use crate::rng::Seed;
use crate::walk::AtomSampler;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HittingParams {
    /// Starting points as Iwasawa triples.
    pub x_list: Vec<[f64; 3]>,
    pub target: [f64; 3],
    pub r: f64,
    /// Walk length; when absent, `⌈c_log · ln(1/r)⌉`.
    pub n_steps: Option<usize>,
    pub c_log: Option<f64>,
    pub trials: usize,
    pub z: f64,
    pub min_prob: f64,
}

impl Default for HittingParams {
    fn default() -> Self {
        Self {
            x_list: vec![[0.0, 1.0, 0.0], [0.3, 2.0, 1.0], [0.1, 5.0, 0.5]],
            target: [0.2, 1.5, 0.8],
            r: 0.2,
            n_steps: None,
            c_log: Some(10.0),
            trials: 100_000,
            z: 1.96,
            min_prob: 0.0,
        }
    }
}

impl HittingParams {
    pub fn steps(&self) -> Result<usize> {
        let n = match (self.n_steps, self.c_log) {
            (Some(n), _) => n,
            (None, Some(c)) => (c * (1.0 / self.r).ln()).ceil() as usize,
            (None, None) => return Err(Error::InvalidArgument("hitting needs n_steps or c_log".into())),
        };
        if n == 0 {
            return Err(Error::InvalidArgument("hitting needs N ≥ 1".into()));
        }
        Ok(n)
    }
}

pub fn point(t: &[f64; 3]) -> SpacePoint {
    SpacePoint::from_coordinates(t[0], t[1], t[2])
}

/// Fraction of walks `Z_N ⋯ Z₁ x` ending in `B_r(y)`, for each starting x.
pub fn hitting_probability(mu: &FiniteSupportMeasure, p: &HittingParams, seed: Seed) -> Result<ExperimentReport> {
    let n = p.steps()?;
    let y = point(&p.target);
    let sampler = AtomSampler::new(mu);
    let mut table = Table::new(
        "hitting",
        &["x_index", "x", "y", "theta", "hits", "trials", "prob", "wilson_lo", "wilson_hi"],
    );
    let mut min_prob = f64::INFINITY;
    for (i, xt) in p.x_list.iter().enumerate() {
        let x = point(xt);
        let s = seed.derive(i as u64);
        let hits = ordered_sums(p.trials, 1, |t, acc| {
            let e = sampler.endpoint(&x, n, &mut s.with_stream(t as u64).rng());
            if dist_x_below(&e, &y, p.r).is_some() {
                acc[0] += 1.0;
            }
        })[0] as u64;
        let prob = hits as f64 / p.trials as f64;
        let (lo, hi) = wilson(hits, p.trials as u64, p.z);
        min_prob = min_prob.min(prob);
        let (a, b, c) = x.coords();
        table.push(vec![
            i.into(),
            a.into(),
            b.into(),
            c.into(),
            hits.into(),
            p.trials.into(),
            prob.into(),
            lo.into(),
            hi.into(),
        ]);
    }
    let mut report = ExperimentReport::new("hitting");
    report.estimate("n_steps", n as f64);
    report.estimate("min_prob", min_prob);
    report.estimate("b_hat", min_prob.ln() / p.r.ln());
    report.verdicts.push(Verdict::above("min_prob", min_prob, p.min_prob));
    report.tables.push(table);
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityParams {
    pub r: f64,
    /// Exponents A; trajectories have length `⌈r^{−max A}⌉`.
    pub a_grid: Vec<f64>,
    pub trials: usize,
    pub fill_patience: usize,
    pub survival_points: usize,
    pub confidence: f64,
}

impl Default for DensityParams {
    fn default() -> Self {
        Self {
            r: 0.3,
            a_grid: vec![2.0, 3.0, 4.0],
            trials: 200,
            fill_patience: DEFAULT_FILL_PATIENCE,
            survival_points: 100,
            confidence: 0.95,
        }
    }
}

pub fn trajectory_length(r: f64, a: f64) -> usize {
    r.powf(-a).ceil() as usize
}

/// Whether `(Y₁, …, Y_L)` is r-dense in `X(1/r)`, tracked against a net, with
/// first hitting times of every net point.
pub fn density_probability(
    mu: &FiniteSupportMeasure,
    x0: &SpacePoint,
    p: &DensityParams,
    height: &HeightParams,
    seed: Seed,
) -> Result<ExperimentReport> {
    if p.a_grid.is_empty() || p.a_grid.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::InvalidArgument("a_grid must hold positive exponents".into()));
    }
    let a_max = p.a_grid.iter().cloned().fold(0.0, f64::max);
    let len = trajectory_length(p.r, a_max);
    let index = net_index((1.0 / p.r).max(1.0), p.r, height, p.fill_patience)?;
    let m = index.len();
    let sampler = AtomSampler::new(mu);
    // first hitting time per (trial, net point); len + 1 means never
    let hits: Vec<Vec<usize>> = (0..p.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed.with_stream(t as u64).rng();
            let mut first = vec![len + 1; m];
            let mut left = m;
            let mut y = *x0;
            for step in 1..=len {
                y = sampler.step(sampler.draw(&mut rng), &y);
                for id in index.within(&y, p.r) {
                    let f = &mut first[id as usize];
                    if *f > len {
                        *f = step;
                        left -= 1;
                    }
                }
                if left == 0 {
                    break;
                }
            }
            first
        })
        .collect();

    let mut report = ExperimentReport::new("density");
    let mut fail = Table::new("density", &["a", "length", "failures", "trials", "failure_fraction", "wilson_lo", "wilson_hi"]);
    let mut a_sorted = p.a_grid.clone();
    a_sorted.sort_by(f64::total_cmp);
    for &a in &a_sorted {
        let l = trajectory_length(p.r, a);
        let failures = hits.iter().filter(|f| f.iter().any(|&h| h > l)).count();
        let (lo, hi) = wilson(failures as u64, p.trials as u64, 1.96);
        fail.push(vec![
            a.into(),
            l.into(),
            failures.into(),
            p.trials.into(),
            (failures as f64 / p.trials as f64).into(),
            lo.into(),
            hi.into(),
        ]);
    }

    // pooled survival of first hitting times over (trial, net point)
    let mut all: Vec<usize> = hits.iter().flatten().copied().collect();
    all.sort_unstable();
    let total = all.len() as f64;
    let mut surv = Table::new("hit_times", &["t", "survival"]);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut last = 0;
    for k in 1..=p.survival_points {
        let t = (len * k).div_ceil(p.survival_points);
        if t == last {
            continue;
        }
        last = t;
        let s = (all.len() - all.partition_point(|&h| h <= t)) as f64 / total;
        surv.push(vec![t.into(), s.into()]);
        if s > 0.0 {
            xs.push(t as f64);
            ys.push(s.ln());
        }
    }
    let fit = ols(&xs, &ys);
    report.fit("log_survival_vs_t", fit);
    report.estimate("net_size", m as f64);
    report.estimate("trajectory_length", len as f64);
    let upper = match fit {
        Some(f) if f.n >= 4 => f.slope_upper(p.confidence),
        _ => f64::NAN,
    };
    report.verdicts.push(Verdict::below("log_survival_slope_upper", upper, 0.0));
    report.tables = vec![fail, surv];
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupElement;
    use crate::measures::generator_presets;

    #[test]
    fn dirac_at_identity_always_hits_start() {
        let mu = FiniteSupportMeasure::dirac(GroupElement::identity());
        let p = HittingParams {
            x_list: vec![[0.2, 1.5, 0.8]],
            target: [0.2, 1.5, 0.8],
            r: 0.01,
            n_steps: Some(5),
            trials: 100,
            ..Default::default()
        };
        let rep = hitting_probability(&mu, &p, Seed::new(1)).unwrap();
        assert_eq!(rep.estimates["min_prob"], 1.0);
        assert!(rep.passed());
    }

    #[test]
    fn probabilities_and_intervals_are_valid() {
        let mu = generator_presets("unipotents-rot35", 1.0).unwrap();
        let p = HittingParams {
            r: 0.5,
            n_steps: Some(6),
            trials: 2000,
            ..Default::default()
        };
        let rep = hitting_probability(&mu, &p, Seed::new(2)).unwrap();
        let t = rep.table("hitting").unwrap();
        for row in &t.rows {
            let get = |c: usize| match row[c] {
                super::super::Cell::Float(v) => v,
                _ => unreachable!(),
            };
            let (pr, lo, hi) = (get(6), get(7), get(8));
            assert!((0.0..=1.0).contains(&pr) && lo <= pr && pr <= hi);
        }
    }

    #[test]
    fn single_ball_net_never_fails_and_failures_shrink_with_a() {
        let mu = generator_presets("unipotents-rot35", 1.0).unwrap();
        let x0 = SpacePoint::identity_coset();
        let h = HeightParams::default();
        let big = DensityParams {
            r: 3.5,
            a_grid: vec![0.5, 1.0],
            trials: 20,
            ..Default::default()
        };
        let rep = density_probability(&mu, &x0, &big, &h, Seed::new(3)).unwrap();
        assert_eq!(rep.estimates["net_size"], 1.0);
        for row in &rep.table("density").unwrap().rows {
            assert_eq!(row[2], super::super::Cell::Int(0));
        }

        let p = DensityParams {
            r: 0.5,
            a_grid: vec![1.0, 2.0, 3.0, 4.0],
            trials: 40,
            ..Default::default()
        };
        let rep = density_probability(&mu, &x0, &p, &h, Seed::new(4)).unwrap();
        let f: Vec<i64> = rep
            .table("density")
            .unwrap()
            .rows
            .iter()
            .map(|r| match r[2] {
                super::super::Cell::Int(v) => v,
                _ => unreachable!(),
            })
            .collect();
        assert!(f.windows(2).all(|w| w[1] <= w[0]), "{f:?}");
    }
}

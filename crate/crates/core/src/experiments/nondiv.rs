//! Tails and drift of the height along the walk.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ols, ordered_sums, ExperimentReport, Table, Verdict};
use crate::error::{Error, Result};
use crate::lattice::{haar_point, sample_ball, HeightParams, SpacePoint};
use crate::measures::FiniteSupportMeasure;
use crate::rng::Seed;
use crate::walk::AtomSampler;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonDivergenceParams {
    pub n_list: Vec<usize>,
    pub h_grid: Vec<f64>,
    pub trials: usize,
    /// Bound on `max_n / min_n` of `tail·h/ht(x0)` at each h.
    pub max_spread: f64,
    /// Bound for holdout cells; when absent, `holdout_factor · Ĉ`.
    pub c_fixture: Option<f64>,
    pub holdout_factor: f64,
}

impl Default for NonDivergenceParams {
    fn default() -> Self {
        Self {
            n_list: vec![50, 100, 200],
            h_grid: vec![2.0, 4.0, 8.0, 16.0],
            trials: 100_000,
            max_spread: 4.0,
            c_fixture: None,
            holdout_factor: 2.0,
        }
    }
}

/// Empirical `μ^{*n}{g : ht(g x0) ≥ h}` over an (n, h) grid, scaled by `h/ht(x0)`.
pub fn non_divergence(
    mu: &FiniteSupportMeasure,
    x0: &SpacePoint,
    p: &NonDivergenceParams,
    height: &HeightParams,
    seed: Seed,
) -> Result<ExperimentReport> {
    let mut ns = p.n_list.clone();
    ns.sort_unstable();
    ns.dedup();
    if ns.is_empty() || p.h_grid.is_empty() {
        return Err(Error::InvalidArgument("n_list and h_grid must be non-empty".into()));
    }
    let n_max = *ns.last().unwrap();
    let (nh, nn) = (p.h_grid.len(), ns.len());
    let sampler = AtomSampler::new(mu);
    let counts = ordered_sums(p.trials, nn * nh, |t, acc| {
        let mut rng = seed.with_stream(t as u64).rng();
        let mut y = *x0;
        let mut next = 0;
        for step in 0..=n_max {
            if step > 0 {
                y = sampler.step(sampler.draw(&mut rng), &y);
            }
            while next < nn && ns[next] == step {
                let ht = y.height(height);
                for (j, h) in p.h_grid.iter().enumerate() {
                    if ht >= *h {
                        acc[next * nh + j] += 1.0;
                    }
                }
                next += 1;
            }
        }
    });

    let ht0 = x0.height(height);
    let mut table = Table::new("nondiv", &["n", "h", "tail_count", "trials", "tail", "tail_se", "ratio"]);
    let ratio = |i: usize, j: usize| counts[i * nh + j] / p.trials as f64 * p.h_grid[j] / ht0;
    for (i, &n) in ns.iter().enumerate() {
        for (j, &h) in p.h_grid.iter().enumerate() {
            let tail = counts[i * nh + j] / p.trials as f64;
            table.push(vec![
                n.into(),
                h.into(),
                (counts[i * nh + j] as u64).into(),
                p.trials.into(),
                tail.into(),
                (tail * (1.0 - tail) / p.trials as f64).sqrt().into(),
                ratio(i, j).into(),
            ]);
        }
    }

    let mut report = ExperimentReport::new("nondiv");
    // spread across n at each h
    let spread = (0..nh)
        .map(|j| {
            let r: Vec<f64> = (0..nn).map(|i| ratio(i, j)).collect();
            let (lo, hi) = r.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
            if hi == 0.0 {
                1.0
            } else {
                hi / lo
            }
        })
        .fold(1.0f64, f64::max);
    let all: Vec<f64> = (0..nn).flat_map(|i| (0..nh).map(move |j| (i, j))).map(|(i, j)| ratio(i, j)).collect();
    let grid_max = all.iter().cloned().fold(0.0, f64::max);
    let grid_min = all.iter().cloned().fold(f64::INFINITY, f64::min);
    report.estimate("c_hat", grid_max);
    report.estimate("ratio_spread_across_n", spread);
    report.estimate("ratio_spread_whole_grid", grid_max / grid_min);
    // Ĉ from the smallest n, checked on the remaining cells
    let c_fit = (0..nh).map(|j| ratio(0, j)).fold(0.0, f64::max);
    let holdout = (1..nn).flat_map(|i| (0..nh).map(move |j| (i, j))).map(|(i, j)| ratio(i, j)).fold(0.0, f64::max);
    report.estimate("c_fit", c_fit);
    report.estimate("holdout_max_ratio", holdout);
    report.verdicts.push(Verdict::at_most("ratio_spread_across_n", spread, p.max_spread));
    if nn > 1 {
        let bound = p.c_fixture.unwrap_or(p.holdout_factor * c_fit);
        report.verdicts.push(Verdict::at_most("holdout_ratio", holdout, bound));
    }
    report.tables.push(table);
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractionParams {
    pub n_list: Vec<usize>,
    /// Heights of sample points are log-uniform in this range.
    pub height_range: [f64; 2],
    pub points: usize,
    pub holdout_points: usize,
    pub trials: usize,
    pub confidence: f64,
    pub slack_a: f64,
    pub slack_b: f64,
    pub min_holdout_fraction: f64,
    pub lipschitz_samples: usize,
    pub lipschitz_radius: f64,
    pub lipschitz_slack: f64,
}

impl Default for ContractionParams {
    fn default() -> Self {
        Self {
            n_list: vec![1, 10, 50, 100],
            height_range: [1.0, 30.0],
            points: 40,
            holdout_points: 40,
            trials: 4000,
            confidence: 0.95,
            slack_a: 0.05,
            slack_b: 0.05,
            min_holdout_fraction: 0.99,
            lipschitz_samples: 10_000,
            lipschitz_radius: 2.0,
            lipschitz_slack: 0.1,
        }
    }
}

fn sample_points(count: usize, range: [f64; 2], height: &HeightParams, seed: Seed) -> Vec<SpacePoint> {
    let mut rng = seed.rng();
    let (l0, l1) = (range[0].ln(), range[1].ln());
    (0..count)
        .map(|_| {
            let h = (l0 + (l1 - l0) * rng.gen::<f64>()).exp();
            let y = height.y_for_height(h).max(1.0);
            let x = rng.gen::<f64>() - 0.5;
            let theta = std::f64::consts::PI * rng.gen::<f64>();
            SpacePoint::from_coordinates(x, y, theta)
        })
        .collect()
}

/// Mean height after each `n ∈ ns` (sorted), with standard errors.
fn mean_heights(
    sampler: &AtomSampler,
    x: &SpacePoint,
    ns: &[usize],
    trials: usize,
    height: &HeightParams,
    seed: Seed,
) -> Vec<(f64, f64)> {
    let n_max = *ns.last().unwrap_or(&0);
    let k = ns.len();
    let sums = ordered_sums(trials, 2 * k, |t, acc| {
        let mut rng = seed.with_stream(t as u64).rng();
        let mut y = *x;
        let mut next = 0;
        for step in 0..=n_max {
            if step > 0 {
                y = sampler.step(sampler.draw(&mut rng), &y);
            }
            while next < k && ns[next] == step {
                let h = y.height(height);
                acc[2 * next] += h;
                acc[2 * next + 1] += h * h;
                next += 1;
            }
        }
    });
    let nf = trials as f64;
    (0..k)
        .map(|i| {
            let m = sums[2 * i] / nf;
            let var = ((sums[2 * i + 1] / nf - m * m) * nf / (nf - 1.0).max(1.0)).max(0.0);
            (m, (var / nf).sqrt())
        })
        .collect()
}

/// Regression of `E[ht(Z_N ⋯ Z₁ x)]` on `ht(x)` for each N, a holdout check
/// of the fitted drift inequality, and the log-Lipschitz property of ht.
pub fn contraction_check(
    mu: &FiniteSupportMeasure,
    p: &ContractionParams,
    height: &HeightParams,
    seed: Seed,
) -> Result<ExperimentReport> {
    let mut ns = p.n_list.clone();
    ns.sort_unstable();
    ns.dedup();
    if ns.is_empty() || p.points < 3 || !(p.height_range[0] >= 1.0 && p.height_range[1] > p.height_range[0]) {
        return Err(Error::InvalidArgument("contraction needs n_list, ≥ 3 points and 1 ≤ h_lo < h_hi".into()));
    }
    let sampler = AtomSampler::new(mu);
    let xs = sample_points(p.points, p.height_range, height, seed.derive_str("points"));
    let means: Vec<Vec<(f64, f64)>> = xs
        .iter()
        .enumerate()
        .map(|(i, x)| mean_heights(&sampler, x, &ns, p.trials, height, seed.derive_str("walks").derive(i as u64)))
        .collect();
    let hts: Vec<f64> = xs.iter().map(|x| x.height(height)).collect();

    let mut report = ExperimentReport::new("contraction");
    let mut table = Table::new("contraction", &["set", "point", "n", "height", "mean_height", "se"]);
    for (i, m) in means.iter().enumerate() {
        for (k, &n) in ns.iter().enumerate() {
            table.push(vec!["fit".into(), i.into(), n.into(), hts[i].into(), m[k].0.into(), m[k].1.into()]);
        }
    }
    let mut fits_table = Table::new("contraction_fits", &["n", "a_hat", "a_se", "a_upper", "b_hat", "b_se", "r2"]);
    let mut last = None;
    for (k, &n) in ns.iter().enumerate() {
        let ys: Vec<f64> = means.iter().map(|m| m[k].0).collect();
        let fit = ols(&hts, &ys);
        if let Some(f) = fit {
            fits_table.push(vec![
                n.into(),
                f.slope.into(),
                f.slope_se.into(),
                f.slope_upper(p.confidence).into(),
                f.intercept.into(),
                f.intercept_se.into(),
                f.r2.into(),
            ]);
        }
        report.fit(&format!("n{n}"), fit);
        last = fit;
    }
    let n_last = *ns.last().unwrap();
    let a_upper = last.map_or(f64::NAN, |f| f.slope_upper(p.confidence));
    report.verdicts.push(Verdict::below("a_upper_at_largest_n", a_upper, 1.0));

    if let (Some(f), true) = (last, p.holdout_points > 0) {
        let hold = sample_points(p.holdout_points, p.height_range, height, seed.derive_str("holdout"));
        let (a, b) = (f.slope + p.slack_a, f.intercept + p.slack_b * f.intercept.abs());
        let ok: Vec<bool> = hold
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let m = mean_heights(&sampler, x, &[n_last], p.trials, height, seed.derive_str("holdout-walks").derive(i as u64))[0];
                let h = x.height(height);
                table.push(vec!["holdout".into(), i.into(), n_last.into(), h.into(), m.0.into(), m.1.into()]);
                m.0 <= a * h + b
            })
            .collect();
        let frac = ok.iter().filter(|&&v| v).count() as f64 / ok.len() as f64;
        report.estimate("holdout_fraction", frac);
        report.verdicts.push(Verdict::at_least("holdout_fraction", frac, p.min_holdout_fraction));
    }

    if p.lipschitz_samples > 0 {
        let (viol, worst) = height_lipschitz(p.lipschitz_samples, p.lipschitz_radius, p.lipschitz_slack, height, seed.derive_str("lipschitz"));
        report.estimate("lipschitz_worst_log_excess", worst);
        report.verdicts.push(Verdict::at_most("lipschitz_violations", viol as f64, 0.0));
    }
    report.tables = vec![table, fits_table];
    Ok(report)
}

/// Counts pairs with `|ln ht(gx) − ln ht(x)| > 2ρ(g) + slack`, for x Haar in
/// `{y ≤ 50}` and g uniform in a ball of radius uniform in `[0, radius]`.
/// Also returns the largest `|Δ ln ht| − 2ρ(g)`.
pub fn height_lipschitz(samples: usize, radius: f64, slack: f64, height: &HeightParams, seed: Seed) -> (usize, f64) {
    let out: Vec<(bool, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.with_stream(i as u64).rng();
            let x = haar_point(&mut rng, 50.0);
            let rad = (radius * rng.gen::<f64>()).max(1e-6);
            let g = sample_ball(&mut rng, rad);
            let d = (x.translate(&g).height(height).ln() - x.height(height).ln()).abs();
            let excess = d - 2.0 * g.displacement();
            (excess > slack, excess)
        })
        .collect();
    let viol = out.iter().filter(|v| v.0).count();
    (viol, out.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max))
}

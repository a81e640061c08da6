//! Flattening of convolution powers in G, local dimension of their images in
//! X, and the smoothed density built from them.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_se, ols, ExperimentReport, Table, Verdict};
use crate::error::{Error, Result};
use crate::group::GroupElement;
use crate::lattice::{dist_x, haar_ball_volume, sample_ball, CosetIndex, HeightParams, SpacePoint};
use crate::measures::{EntryGrid, FiniteSupportMeasure, ATOM_BUDGET};
use crate::rng::Seed;

fn check_deltas(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
        return Err(Error::InvalidArgument("delta_grid values must lie in (0, 1)".into()));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlatteningParams {
    pub n_list: Vec<usize>,
    pub delta_grid: Vec<f64>,
    /// Heaviest atoms used as centres.
    pub atom_centers: usize,
    /// Random perturbations `u·a`, `u ∈ B_δ`, of weight-sampled atoms.
    pub center_samples: usize,
    pub atom_budget: usize,
}

impl Default for FlatteningParams {
    fn default() -> Self {
        Self {
            n_list: vec![4, 6, 8],
            delta_grid: vec![0.0625, 0.03125, 0.015625, 0.0078125],
            atom_centers: 500,
            center_samples: 500,
            atom_budget: ATOM_BUDGET,
        }
    }
}

/// Mass of `B_δ(c)` under the atoms stored in `grid`.
fn ball_mass(atoms: &[(GroupElement, f64)], grid: &EntryGrid, c: &GroupElement, delta: f64, entry_tol: f64) -> f64 {
    let mut m = 0.0;
    grid.for_each_candidate(c, |id| {
        let (g, w) = &atoms[id];
        if g.max_entry_diff(c) <= entry_tol && g.dist(c) < delta {
            m += w;
        }
    });
    m
}

/// `sup_g μ^{*n}(B_δ(g)) / m_G(B_δ)` over centres at heavy atoms and random
/// perturbations of atoms, with `γ̂ = −ln(sup)/ln δ`.
pub fn flattening_estimate(mu: &FiniteSupportMeasure, p: &FlatteningParams, seed: Seed) -> Result<ExperimentReport> {
    check_deltas(&p.delta_grid)?;
    let mut ns = p.n_list.clone();
    ns.sort_unstable();
    ns.dedup();
    let mut report = ExperimentReport::new("flatten");
    let mut table = Table::new(
        "flatten",
        &["n", "delta", "atoms", "sup_mass", "ball_volume", "sup_density", "gamma_hat"],
    );
    let mut gamma = vec![vec![f64::NAN; p.delta_grid.len()]; ns.len()];
    for (i, &n) in ns.iter().enumerate() {
        let power = match mu.power_with_budget(n, p.atom_budget) {
            Ok(m) => m,
            Err(e) => {
                report.partial = true;
                report.notes.push(format!("n = {n}: {e}"));
                break;
            }
        };
        let atoms = power.atoms();
        let scale = atoms.iter().fold(1.0f64, |m, (g, _)| m.max(g.operator_norm()));
        let mut order: Vec<usize> = (0..atoms.len()).collect();
        order.sort_by(|&a, &b| atoms[b].1.total_cmp(&atoms[a].1).then(a.cmp(&b)));
        let cum = power.cumulative();
        for (j, &delta) in p.delta_grid.iter().enumerate() {
            let mut grid = EntryGrid::new(delta, scale);
            for (id, (g, _)) in atoms.iter().enumerate() {
                grid.insert(g, id);
            }
            let entry_tol = 2.0 * delta * scale;
            let s = seed.derive(n as u64).derive(j as u64);
            let mut centers: Vec<GroupElement> = order.iter().take(p.atom_centers).map(|&k| atoms[k].0).collect();
            centers.extend((0..p.center_samples).map(|t| {
                let mut rng = s.with_stream(t as u64).rng();
                let u: f64 = rng.gen();
                let k = cum.partition_point(|&c| c <= u).min(atoms.len() - 1);
                sample_ball(&mut rng, delta).mul_raw(&atoms[k].0).renormalized()
            }));
            let sup = centers
                .par_iter()
                .map(|c| ball_mass(atoms, &grid, c, delta, entry_tol))
                .collect::<Vec<_>>()
                .into_iter()
                .fold(0.0, f64::max);
            let vol = haar_ball_volume(delta);
            let density = sup / vol;
            let g = -density.ln() / delta.ln();
            gamma[i][j] = g;
            table.push(vec![
                n.into(),
                delta.into(),
                atoms.len().into(),
                sup.into(),
                vol.into(),
                density.into(),
                g.into(),
            ]);
        }
    }
    // γ̂ should fall as n grows, at every δ
    let mut rises = 0usize;
    for j in 0..p.delta_grid.len() {
        for i in 1..ns.len() {
            if !(gamma[i][j] < gamma[i - 1][j]) {
                rises += 1;
            }
        }
    }
    report.estimate("gamma_hat_non_decreases", rises as f64);
    if ns.len() > 1 {
        report.verdicts.push(Verdict::at_most("gamma_hat_non_decreases", rises as f64, 0.0));
    }
    report.tables.push(table);
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HighDimensionParams {
    pub n: usize,
    pub delta_grid: Vec<f64>,
    pub centers: usize,
    /// Centres are Haar-uniform in the ball around x0 holding this fraction of ν's mass.
    pub mass_quantile: f64,
    pub min_median_slope: f64,
    pub min_fit_points: usize,
    pub atom_budget: usize,
}

impl Default for HighDimensionParams {
    fn default() -> Self {
        Self {
            n: 8,
            delta_grid: vec![0.0078125, 0.015625, 0.03125, 0.0625, 0.125],
            centers: 200,
            mass_quantile: 0.5,
            min_median_slope: 2.5,
            min_fit_points: 2,
            atom_budget: ATOM_BUDGET,
        }
    }
}

/// Radius around x0 holding `q` of the mass of ν.
fn mass_radius(nu: &[(SpacePoint, f64)], x0: &SpacePoint, q: f64) -> f64 {
    let mut d: Vec<(f64, f64)> = nu.par_iter().map(|(p, w)| (dist_x(p, x0), *w)).collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = 0.0;
    for (r, w) in &d {
        acc += w;
        if acc >= q {
            return *r;
        }
    }
    d.last().map_or(0.0, |v| v.0)
}

/// Exact `ν(B_δ(x))` for the pushforward `ν = μ^{*n} * δ_{x0}` at random
/// centres x, and per-centre slopes of `ln ν(B_δ)` against `ln δ`.
pub fn high_dimension(
    mu: &FiniteSupportMeasure,
    x0: &SpacePoint,
    p: &HighDimensionParams,
    seed: Seed,
) -> Result<ExperimentReport> {
    check_deltas(&p.delta_grid)?;
    let mut deltas = p.delta_grid.clone();
    deltas.sort_by(f64::total_cmp);
    let nu = mu.power_with_budget(p.n, p.atom_budget)?.pushforward(x0);
    let radius = mass_radius(&nu, x0, p.mass_quantile).max(0.5 * deltas[0]);
    let indices: Vec<CosetIndex> = deltas
        .par_iter()
        .map(|&d| {
            let mut idx = CosetIndex::new(d);
            for (q, _) in &nu {
                idx.insert(*q);
            }
            idx
        })
        .collect();
    let centers: Vec<SpacePoint> = (0..p.centers)
        .map(|t| x0.translate(&sample_ball(&mut seed.with_stream(t as u64).rng(), radius)))
        .collect();
    let masses: Vec<Vec<f64>> = centers
        .par_iter()
        .map(|c| {
            deltas
                .iter()
                .zip(&indices)
                .map(|(&d, idx)| idx.within(c, d).iter().map(|&id| nu[id as usize].1).sum())
                .collect()
        })
        .collect();

    let mut table = Table::new("dimension", &["center", "x", "y", "theta", "delta", "mass"]);
    let mut slopes_table = Table::new("dimension_slopes", &["center", "fit_points", "slope", "slope_se", "r2"]);
    let mut slopes = Vec::with_capacity(centers.len());
    let mut unresolved = 0usize;
    for (k, (c, m)) in centers.iter().zip(&masses).enumerate() {
        let (x, y, t) = c.coords();
        for (d, v) in deltas.iter().zip(m) {
            table.push(vec![k.into(), x.into(), y.into(), t.into(), (*d).into(), (*v).into()]);
        }
        let (lx, ly): (Vec<f64>, Vec<f64>) = deltas.iter().zip(m).filter(|(_, v)| **v > 0.0).map(|(d, v)| (d.ln(), v.ln())).unzip();
        // mass vanishing at small δ means decay faster than any fitted power
        let (slope, se, r2) = match ols(&lx, &ly) {
            Some(f) if lx.len() >= p.min_fit_points => (f.slope, f.slope_se, f.r2),
            _ => {
                unresolved += 1;
                (f64::INFINITY, f64::NAN, f64::NAN)
            }
        };
        slopes.push(slope);
        slopes_table.push(vec![k.into(), lx.len().into(), slope.into(), se.into(), r2.into()]);
    }
    let mut sorted = slopes.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.is_empty() {
        f64::NAN
    } else if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let mut report = ExperimentReport::new("dimension");
    report.estimate("atoms", nu.len() as f64);
    report.estimate("center_radius", radius);
    report.estimate("median_slope", median);
    report.estimate("min_slope", sorted.first().copied().unwrap_or(f64::NAN));
    let finite: Vec<f64> = sorted.iter().copied().filter(|v| v.is_finite()).collect();
    let median_finite = match finite.len() {
        0 => f64::NAN,
        k if k % 2 == 1 => finite[k / 2],
        k => 0.5 * (finite[k / 2 - 1] + finite[k / 2]),
    };
    report.estimate("median_finite_slope", median_finite);
    report.estimate("unresolved_centers", unresolved as f64);
    report.verdicts.push(Verdict::at_least("median_slope", median, p.min_median_slope));
    report.tables = vec![table, slopes_table];
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothedParams {
    pub n: usize,
    pub delta: f64,
    pub eta: f64,
    /// Fitted height constants in the cutoff `E₁ δ^{−κ₁η}`.
    pub e1: f64,
    pub kappa1: f64,
    pub eval_points: usize,
    /// Ball samples per atom for `∫ f h dm_X`.
    pub ball_samples: usize,
    pub bumps: usize,
    pub smooth: usize,
    pub c_hat: f64,
    pub sigmas: f64,
    pub atom_budget: usize,
}

impl Default for SmoothedParams {
    fn default() -> Self {
        Self {
            n: 6,
            delta: 0.05,
            eta: 0.5,
            e1: 1.0,
            kappa1: 1.0,
            eval_points: 20_000,
            ball_samples: 8,
            bumps: 10,
            smooth: 10,
            c_hat: 10.0,
            sigmas: 3.0,
            atom_budget: ATOM_BUDGET,
        }
    }
}

impl SmoothedParams {
    pub fn cutoff(&self) -> f64 {
        self.e1 * self.delta.powf(-self.kappa1 * self.eta)
    }
}

/// `h(x) = ν(B_δ(x))/m_G(B_δ) · 1{ht(x) ≤ cutoff}` at each point.
pub fn smoothed_density(
    nu: &[(SpacePoint, f64)],
    delta: f64,
    cutoff: f64,
    height: &HeightParams,
    eval_points: &[SpacePoint],
) -> Vec<f64> {
    let mut idx = CosetIndex::new(delta);
    for (q, _) in nu {
        idx.insert(*q);
    }
    let vol = haar_ball_volume(delta);
    eval_points
        .par_iter()
        .map(|x| {
            if x.height(height) > cutoff {
                return 0.0;
            }
            idx.within(x, delta).iter().map(|&id| nu[id as usize].1).sum::<f64>() / vol
        })
        .collect()
}

/// Evaluates h on Haar points of the ball around x0 containing the support,
/// estimates `∫ h dm_X` from them, and tests
/// `|∫ f·1{ht ≤ cutoff} dν − ∫ f h dm_X| ≤ Ĉ(δ Lip f + ht(x0) δ^{κ₁η} ‖f‖_∞)`
/// on test functions. The second integral is `Σ_a w_a E_{u ∈ B_δ}[(f·1)(u a)]`,
/// which equals `∫ f h dm_X` when the balls embed.
pub fn smoothed_density_check(
    mu: &FiniteSupportMeasure,
    x0: &SpacePoint,
    p: &SmoothedParams,
    height: &HeightParams,
    seed: Seed,
) -> Result<ExperimentReport> {
    if !(p.delta > 0.0 && p.delta < 1.0 && p.eta > 0.0 && p.eta < 1.0) {
        return Err(Error::InvalidArgument("smoothed needs δ, η ∈ (0, 1)".into()));
    }
    let nu = mu.power_with_budget(p.n, p.atom_budget)?.pushforward(x0);
    let cutoff = p.cutoff();
    let mut report = ExperimentReport::new("smoothed");
    report.estimate("cutoff", cutoff);
    report.estimate("atoms", nu.len() as f64);

    // ∫ h dm_X over Haar points of B_R(x0), R = support radius + δ
    let radius = nu.iter().map(|(q, _)| dist_x(q, x0)).fold(0.0, f64::max) + p.delta;
    let pts: Vec<SpacePoint> = (0..p.eval_points)
        .map(|t| x0.translate(&sample_ball(&mut seed.derive_str("eval").with_stream(t as u64).rng(), radius)))
        .collect();
    let h = smoothed_density(&nu, p.delta, cutoff, height, &pts);
    let region = haar_ball_volume(radius);
    let (mh, se_h) = mean_se(&h);
    let (int_h, int_se) = (mh * region, se_h * region);
    report.estimate("integral_h", int_h);
    report.estimate("integral_h_se", int_se);
    report.verdicts.push(Verdict::at_most("integral_h", int_h - p.sigmas * int_se, 1.0));
    let mut evals = Table::new("smoothed", &["point", "x", "y", "theta", "h"]);
    for (k, (q, v)) in pts.iter().zip(&h).enumerate() {
        let (x, y, t) = q.coords();
        evals.push(vec![k.into(), x.into(), y.into(), t.into(), (*v).into()]);
    }

    let fs = super::standard_test_functions(p.bumps, p.smooth, seed.derive_str("functions"));
    let ht0 = x0.height(height);
    let shifts: Vec<Vec<GroupElement>> = (0..nu.len())
        .map(|a| {
            let mut rng = seed.derive_str("balls").with_stream(a as u64).rng();
            (0..p.ball_samples).map(|_| sample_ball(&mut rng, p.delta)).collect()
        })
        .collect();
    let mut resid = Table::new(
        "smoothed_residual",
        &["function", "lhs", "rhs", "rhs_se", "residual", "bound", "pass"],
    );
    let mut fails = 0usize;
    for (k, f) in fs.iter().enumerate() {
        let cut = |q: &SpacePoint| if q.height(height) <= cutoff { f.eval(q) } else { 0.0 };
        let lhs: f64 = nu.iter().map(|(q, w)| w * cut(q)).sum();
        // per atom: mean over ball samples, and the variance of that mean
        let parts: Vec<(f64, f64)> = nu
            .par_iter()
            .zip(&shifts)
            .map(|((q, w), us)| {
                let v: Vec<f64> = us.iter().map(|u| cut(&q.translate(u))).collect();
                let (m, se) = mean_se(&v);
                (w * m, (w * se.max(0.0)).powi(2))
            })
            .collect();
        let rhs: f64 = parts.iter().map(|v| v.0).sum();
        let rhs_se = parts.iter().map(|v| if v.1.is_nan() { 0.0 } else { v.1 }).sum::<f64>().sqrt();
        let sup = 1.0;
        let bound = p.c_hat * (p.delta * f.lipschitz_bound() + ht0 * p.delta.powf(p.kappa1 * p.eta) * sup);
        let residual = (lhs - rhs).abs();
        let pass = residual - p.sigmas * rhs_se <= bound;
        fails += (!pass) as usize;
        resid.push(vec![
            k.into(),
            lhs.into(),
            rhs.into(),
            rhs_se.into(),
            residual.into(),
            bound.into(),
            pass.into(),
        ]);
    }
    report.verdicts.push(Verdict::at_most("residual_failures", fails as f64, 0.0));
    report.tables = vec![evals, resid];
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::generator_presets;

    fn eps_preset() -> FiniteSupportMeasure {
        generator_presets("rot35-unipotent-scaled", 0.05).unwrap()
    }

    #[test]
    fn flattening_of_a_dirac_is_one_over_ball_volume() {
        let mu = FiniteSupportMeasure::dirac(GroupElement::identity());
        let p = FlatteningParams {
            n_list: vec![0],
            delta_grid: vec![0.1],
            atom_centers: 1,
            center_samples: 5,
            ..Default::default()
        };
        let rep = flattening_estimate(&mu, &p, Seed::new(1)).unwrap();
        let row = &rep.table("flatten").unwrap().rows[0];
        let vol = haar_ball_volume(0.1);
        assert_eq!(row[3], super::super::Cell::Float(1.0));
        assert_eq!(row[5], super::super::Cell::Float(1.0 / vol));
    }

    #[test]
    fn ball_mass_matches_linear_scan() {
        let mu = eps_preset().power(4).unwrap();
        let atoms = mu.atoms();
        let scale = atoms.iter().fold(1.0f64, |m, (g, _)| m.max(g.operator_norm()));
        let delta = 0.05;
        let mut grid = EntryGrid::new(delta, scale);
        for (id, (g, _)) in atoms.iter().enumerate() {
            grid.insert(g, id);
        }
        let mut rng = Seed::new(2).rng();
        for k in 0..50 {
            let c = sample_ball(&mut rng, 0.1).mul_raw(&atoms[k * 7 % atoms.len()].0);
            let fast = ball_mass(atoms, &grid, &c, delta, 2.0 * delta * scale);
            let slow: f64 = atoms.iter().filter(|(g, _)| g.dist(&c) < delta).map(|a| a.1).sum();
            assert!((fast - slow).abs() < 1e-15, "{fast} vs {slow}");
        }
    }

    #[test]
    fn dirac_pushforward_has_dimension_zero() {
        let mu = eps_preset();
        let p = HighDimensionParams {
            n: 0,
            centers: 5,
            ..Default::default()
        };
        let rep = high_dimension(&mu, &SpacePoint::identity_coset(), &p, Seed::new(3)).unwrap();
        let rows = &rep.table("dimension").unwrap().rows;
        assert!(rows.iter().all(|r| r[5] == super::super::Cell::Float(1.0)));
        assert_eq!(rep.estimates["median_slope"], 0.0);
    }

    #[test]
    fn ball_masses_grow_with_delta() {
        let mu = eps_preset();
        let p = HighDimensionParams {
            n: 4,
            centers: 30,
            ..Default::default()
        };
        let rep = high_dimension(&mu, &SpacePoint::identity_coset(), &p, Seed::new(4)).unwrap();
        let rows = &rep.table("dimension").unwrap().rows;
        for c in rows.chunks(p.delta_grid.len()) {
            let m: Vec<f64> = c
                .iter()
                .map(|r| match r[5] {
                    super::super::Cell::Float(v) => v,
                    _ => unreachable!(),
                })
                .collect();
            assert!(m.windows(2).all(|w| w[0] <= w[1]), "{m:?}");
        }
    }

    #[test]
    fn smoothed_density_of_a_dirac() {
        let x = SpacePoint::from_coordinates(0.1, 1.4, 0.7);
        let nu = vec![(x, 1.0)];
        let delta = 0.1;
        let vol = haar_ball_volume(delta);
        let mut rng = Seed::new(5).rng();
        let mut pts = Vec::new();
        for _ in 0..200 {
            pts.push(x.translate(&sample_ball(&mut rng, 0.3)));
        }
        let h = smoothed_density(&nu, delta, 10.0, &HeightParams::default(), &pts);
        for (q, v) in pts.iter().zip(&h) {
            let inside = dist_x(q, &x) < delta;
            assert_eq!(*v, if inside { 1.0 / vol } else { 0.0 });
        }
        // above the cutoff h vanishes
        let h = smoothed_density(&nu, delta, 0.5, &HeightParams::default(), &pts);
        assert!(h.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn smoothed_check_on_small_power() {
        let p = SmoothedParams {
            n: 2,
            eval_points: 5000,
            bumps: 3,
            smooth: 3,
            ..Default::default()
        };
        let rep = smoothed_density_check(&eps_preset(), &SpacePoint::identity_coset(), &p, &HeightParams::default(), Seed::new(6)).unwrap();
        assert!(rep.passed(), "{:?}", rep.verdicts);
        let i = rep.estimates["integral_h"];
        assert!((i - 1.0).abs() < 5.0 * rep.estimates["integral_h_se"] + 0.02, "{i}");
    }
}

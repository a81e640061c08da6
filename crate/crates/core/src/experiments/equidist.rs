//! Convergence of walk averages to Haar integrals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::normal_quantile;
use super::{haar_integral, mean_se, ols, ordered_sums, ExperimentReport, Table, TestFunction, Verdict};
use crate::error::{Error, Result};
use crate::lattice::{haar_sample, SpacePoint};
use crate::measures::FiniteSupportMeasure;
use crate::rng::Seed;
use crate::walk::{sample_trajectory, AtomSampler, Trajectory};

/// Birkhoff averages `(1/N) Σ_{k<N} f(Y_k)` at each N in `checkpoints`
/// (capped by the trajectory); rows follow `checkpoints`, columns `fs`.
pub fn orbit_average(traj: &Trajectory, fs: &[TestFunction], checkpoints: &[usize]) -> Result<Vec<Vec<f64>>> {
    let pts = traj
        .points
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("orbit_average needs cached trajectory points".into()))?;
    let mut sums = vec![0.0; fs.len()];
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut done = 0;
    let mut cps: Vec<usize> = checkpoints.iter().map(|&c| c.min(pts.len())).collect();
    cps.sort_unstable();
    for &n in &cps {
        for p in &pts[done..n] {
            for (s, f) in sums.iter_mut().zip(fs) {
                *s += f.eval(p);
            }
        }
        done = n;
        out.push(sums.iter().map(|s| s / n.max(1) as f64).collect());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquidistParams {
    /// Ratios β of μ_D steps to μ steps; ignored without μ_D.
    pub beta_list: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub bumps: usize,
    pub smooth: usize,
    pub quadrature_samples: usize,
    pub fit_sigmas: f64,
    pub min_fit_points: usize,
    pub confidence: f64,
    pub birkhoff_length: usize,
    pub birkhoff_trajectories: usize,
    pub birkhoff_sigmas: f64,
}

impl Default for EquidistParams {
    fn default() -> Self {
        Self {
            beta_list: vec![0.5, 1.0, 2.0],
            n_grid: (0..=60).step_by(4).collect(),
            trials: 100_000,
            bumps: 5,
            smooth: 5,
            quadrature_samples: super::functions::QUADRATURE_SAMPLES,
            fit_sigmas: 3.0,
            min_fit_points: 4,
            confidence: 0.95,
            birkhoff_length: 100_000,
            birkhoff_trajectories: 20,
            birkhoff_sigmas: 3.0,
        }
    }
}

/// Monte Carlo `∫ f d(μ^{*n} * μ_D^{*round(βn)} * δ_{x0}) − ∫ f dm_X` on a grid
/// of n, semilog fits of the error, and Birkhoff averages along μ-trajectories.
pub fn equidistribution_error(
    mu: &FiniteSupportMeasure,
    mu_d: Option<&FiniteSupportMeasure>,
    x0: &SpacePoint,
    p: &EquidistParams,
    seed: Seed,
) -> Result<ExperimentReport> {
    if p.n_grid.is_empty() || p.trials < 2 {
        return Err(Error::InvalidArgument("equidist needs an n grid and ≥ 2 trials".into()));
    }
    let fs = super::standard_test_functions(p.bumps, p.smooth, seed.derive_str("functions"));
    let qseed = seed.derive_str("quadrature");
    let haar: Vec<_> = fs.iter().map(|f| haar_integral(f, p.quadrature_samples, qseed)).collect();
    let betas: Vec<f64> = if mu_d.is_some() { p.beta_list.clone() } else { vec![0.0] };
    let s_mu = AtomSampler::new(mu);
    let s_d = mu_d.map(AtomSampler::new);
    let k = fs.len();

    let mut report = ExperimentReport::new("equidist");
    let mut table = Table::new(
        "equidist",
        &["beta", "n", "m", "function", "mc_mean", "mc_se", "haar", "haar_se", "error", "error_se"],
    );
    let mut fits = Table::new("equidist_fits", &["beta", "function", "points", "theta_hat", "theta_se", "r2"]);
    let mut best_lower = f64::NEG_INFINITY;
    for (bi, &beta) in betas.iter().enumerate() {
        let mut errs = vec![Vec::new(); k];
        for (ni, &n) in p.n_grid.iter().enumerate() {
            let m = (beta * n as f64).round() as usize;
            let s = seed.derive(bi as u64).derive(ni as u64);
            let sums = ordered_sums(p.trials, 2 * k, |t, acc| {
                let mut rng = s.with_stream(t as u64).rng();
                let mut y = *x0;
                if let Some(sd) = &s_d {
                    y = sd.endpoint(&y, m, &mut rng);
                }
                y = s_mu.endpoint(&y, n, &mut rng);
                for (j, f) in fs.iter().enumerate() {
                    let v = f.eval(&y);
                    acc[2 * j] += v;
                    acc[2 * j + 1] += v * v;
                }
            });
            let nf = p.trials as f64;
            for j in 0..k {
                let mean = sums[2 * j] / nf;
                let var = ((sums[2 * j + 1] / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
                let se = (var / nf).sqrt();
                let err = mean - haar[j].value;
                let err_se = (se * se + haar[j].se * haar[j].se).sqrt();
                errs[j].push((n, err, err_se));
                table.push(vec![
                    beta.into(),
                    n.into(),
                    m.into(),
                    j.into(),
                    mean.into(),
                    se.into(),
                    haar[j].value.into(),
                    haar[j].se.into(),
                    err.into(),
                    err_se.into(),
                ]);
            }
        }
        // per function: ln|err| vs n on significant points; pooled by inverse variance
        let (mut wsum, mut wtheta) = (0.0, 0.0);
        for (j, e) in errs.iter().enumerate() {
            let (xs, ys): (Vec<f64>, Vec<f64>) = e
                .iter()
                .filter(|(_, err, se)| err.abs() > p.fit_sigmas * se)
                .map(|(n, err, _)| (*n as f64, err.abs().ln()))
                .unzip();
            if xs.len() < p.min_fit_points {
                continue;
            }
            if let Some(f) = ols(&xs, &ys) {
                fits.push(vec![beta.into(), j.into(), f.n.into(), (-f.slope).into(), f.slope_se.into(), f.r2.into()]);
                if f.slope_se > 0.0 && f.slope_se.is_finite() {
                    let w = f.slope_se.powi(-2);
                    wsum += w;
                    wtheta += w * -f.slope;
                }
            }
        }
        let (theta, se) = if wsum > 0.0 { (wtheta / wsum, wsum.sqrt().recip()) } else { (f64::NAN, f64::NAN) };
        let lower = theta - normal_quantile(p.confidence) * se;
        report.estimate(&format!("theta_hat_beta{beta}"), theta);
        report.estimate(&format!("theta_se_beta{beta}"), se);
        if lower > best_lower || best_lower.is_nan() {
            best_lower = lower;
        }
    }
    report.estimate("theta_lower_best", best_lower);
    report.verdicts.push(Verdict::above("theta_lower_best", best_lower, 0.0));

    // Birkhoff averages over independent μ-trajectories
    let mut birk = Table::new("birkhoff", &["function", "length", "mean", "sd", "haar", "haar_se", "z"]);
    let mut orbit = Table::new("orbit_average", &["trajectory", "n", "function", "average"]);
    if p.birkhoff_trajectories > 1 && p.birkhoff_length > 0 {
        let mut cps: Vec<usize> = std::iter::successors(Some(100usize), |c| Some(c * 10)).take_while(|&c| c < p.birkhoff_length).collect();
        cps.push(p.birkhoff_length);
        let bseed = seed.derive_str("birkhoff");
        let avgs: Vec<Vec<Vec<f64>>> = (0..p.birkhoff_trajectories)
            .into_par_iter()
            .map(|t| {
                let traj = sample_trajectory(mu, x0, p.birkhoff_length - 1, bseed.with_stream(t as u64));
                orbit_average(&traj, &fs, &cps)
            })
            .collect::<Result<_>>()?;
        for (t, a) in avgs.iter().enumerate() {
            for (ci, &c) in cps.iter().enumerate() {
                for j in 0..k {
                    orbit.push(vec![t.into(), c.into(), j.into(), a[ci][j].into()]);
                }
            }
        }
        let mut worst = 0.0f64;
        for j in 0..k {
            let finals: Vec<f64> = avgs.iter().map(|a| a[cps.len() - 1][j]).collect();
            let (m, se) = mean_se(&finals);
            let sd = se * (finals.len() as f64).sqrt();
            let tol = (se * se + haar[j].se * haar[j].se).sqrt();
            let z = (m - haar[j].value).abs() / tol;
            worst = worst.max(z);
            birk.push(vec![j.into(), p.birkhoff_length.into(), m.into(), sd.into(), haar[j].value.into(), haar[j].se.into(), z.into()]);
        }
        report.estimate("birkhoff_max_z", worst);
        report.verdicts.push(Verdict::at_most("birkhoff_max_z", worst, p.birkhoff_sigmas));
    }
    report.tables = vec![table, fits, birk, orbit];
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapParams {
    pub bumps: usize,
    pub n_max: usize,
    pub haar_count: usize,
    pub walk_trials: usize,
    pub y_max: f64,
    pub quadrature_samples: usize,
    pub fit_sigmas: f64,
    pub min_fit_points: usize,
    pub confidence: f64,
    pub c0_sigmas: f64,
}

impl Default for GapParams {
    fn default() -> Self {
        Self {
            bumps: 3,
            n_max: 16,
            haar_count: 200_000,
            walk_trials: 1,
            y_max: 1000.0,
            quadrature_samples: super::functions::QUADRATURE_SAMPLES,
            fit_sigmas: 5.0,
            min_fit_points: 4,
            confidence: 0.95,
            c0_sigmas: 3.0,
        }
    }
}

/// Correlations `c_n(f) = ∫ f₀ · π(μ)ⁿ f₀ dm_X` for mean-zero `f₀ = f − ∫f`,
/// estimated over Haar starting points, and `ĝap = −slope` of `ln|c_n|`.
pub fn spectral_gap_estimate(mu: &FiniteSupportMeasure, p: &GapParams, seed: Seed) -> Result<ExperimentReport> {
    if p.haar_count < 2 || p.walk_trials == 0 {
        return Err(Error::InvalidArgument("gap needs haar_count ≥ 2 and walk_trials ≥ 1".into()));
    }
    let fs: Vec<TestFunction> = super::standard_test_functions(p.bumps, 0, seed.derive_str("functions"));
    let qseed = seed.derive_str("quadrature");
    let means: Vec<f64> = fs.iter().map(|f| haar_integral(f, p.quadrature_samples, qseed).value).collect();
    let xs = haar_sample(p.haar_count, p.y_max, seed.derive_str("starts")).points;
    let sampler = AtomSampler::new(mu);
    let (k, nn) = (fs.len(), p.n_max + 1);
    let wseed = seed.derive_str("walks");
    // per start: f₀(x)·avg f₀(Y_n x) for every (f, n)
    let prods: Vec<Vec<f64>> = xs
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let f0x: Vec<f64> = fs.iter().zip(&means).map(|(f, m)| f.eval(x) - m).collect();
            let mut acc = vec![0.0; k * nn];
            for w in 0..p.walk_trials {
                let mut rng = wseed.with_stream((i * p.walk_trials + w) as u64).rng();
                let mut y = *x;
                for n in 0..nn {
                    if n > 0 {
                        y = sampler.step(sampler.draw(&mut rng), &y);
                    }
                    for j in 0..k {
                        acc[j * nn + n] += f0x[j] * (fs[j].eval(&y) - means[j]);
                    }
                }
            }
            acc.iter().map(|v| v / p.walk_trials as f64).collect()
        })
        .collect();

    let mut report = ExperimentReport::new("gap");
    let mut table = Table::new("gap", &["function", "n", "c_n", "c_n_se"]);
    let mut fits = Table::new("gap_fits", &["function", "points", "gap_hat", "gap_se", "gap_lower", "r2"]);
    let mut best = f64::NEG_INFINITY;
    let mut best_gap = f64::NAN;
    let mut c0_worst = 0.0f64;
    for j in 0..k {
        let (mut lx, mut ly) = (Vec::new(), Vec::new());
        for n in 0..nn {
            let v: Vec<f64> = prods.iter().map(|r| r[j * nn + n]).collect();
            let (c, se) = mean_se(&v);
            table.push(vec![j.into(), n.into(), c.into(), se.into()]);
            if c.abs() > p.fit_sigmas * se {
                lx.push(n as f64);
                ly.push(c.abs().ln());
            }
            if n == 0 {
                // ‖f₀‖² from an independent Haar sample
                let ind = haar_sample(p.haar_count, p.y_max, seed.derive_str("norm").derive(j as u64)).points;
                let sq: Vec<f64> = ind.par_iter().map(|x| (fs[j].eval(x) - means[j]).powi(2)).collect();
                let (q, qse) = mean_se(&sq);
                let z = (c - q).abs() / (se * se + qse * qse).sqrt();
                c0_worst = c0_worst.max(z);
                report.estimate(&format!("c0_z_f{j}"), z);
            }
        }
        if lx.len() >= p.min_fit_points {
            if let Some(f) = ols(&lx, &ly) {
                let lower = -f.slope_upper(p.confidence);
                fits.push(vec![j.into(), f.n.into(), (-f.slope).into(), f.slope_se.into(), lower.into(), f.r2.into()]);
                if lower > best {
                    best = lower;
                    best_gap = -f.slope;
                }
            }
        }
    }
    report.estimate("gap_hat_max", best_gap);
    report.estimate("gap_lower_best", best);
    report.verdicts.push(Verdict::above("gap_lower_best", best, 0.0));
    report.verdicts.push(Verdict::at_most("c0_max_z", c0_worst, p.c0_sigmas));
    report.tables = vec![table, fits];
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupElement;
    use crate::measures::generator_presets;

    #[test]
    fn orbit_average_trivial_cases() {
        let x0 = SpacePoint::from_coordinates(0.1, 1.4, 0.7);
        let dirac = FiniteSupportMeasure::dirac(GroupElement::identity());
        let traj = sample_trajectory(&dirac, &x0, 999, Seed::new(1));
        let f = TestFunction::bump(&SpacePoint::from_coordinates(0.0, 1.3, 0.6), 0.8);
        let fs = vec![TestFunction::Constant { value: 1.0 }, f.clone()];
        let a = orbit_average(&traj, &fs, &[100, 1000]).unwrap();
        for row in a {
            assert_eq!(row[0], 1.0);
            assert!((row[1] - f.eval(&x0)).abs() < 1e-12);
        }
        let no_points = Trajectory { points: None, ..traj };
        assert!(orbit_average(&no_points, &fs, &[10]).is_err());
    }

    #[test]
    fn small_walks_match_exact_convolution() {
        // 3-atom measure, n ≤ 3
        let g = GroupElement::upper_unipotent(0.4);
        let mu = FiniteSupportMeasure::new(vec![(g, 0.3), (g.inverse(), 0.3), (GroupElement::rotation(0.9), 0.4)], 1e-9).unwrap();
        let x0 = SpacePoint::from_coordinates(0.1, 1.2, 0.3);
        let f = TestFunction::bump(&SpacePoint::from_coordinates(0.2, 1.1, 0.5), 1.0);
        let sampler = AtomSampler::new(&mu);
        let trials = 40_000;
        for n in 1..=3 {
            let exact: Vec<(SpacePoint, f64)> = mu.power(n).unwrap().pushforward(&x0);
            let m: f64 = exact.iter().map(|(p, w)| w * f.eval(p)).sum();
            let m2: f64 = exact.iter().map(|(p, w)| w * f.eval(p).powi(2)).sum();
            let s = Seed::new(2).derive(n as u64);
            let sum = ordered_sums(trials, 1, |t, acc| acc[0] += f.eval(&sampler.endpoint(&x0, n, &mut s.with_stream(t as u64).rng())))[0];
            let sigma = ((m2 - m * m) / trials as f64).sqrt();
            assert!((sum / trials as f64 - m).abs() <= 3.0 * sigma, "n = {n}");
        }
    }

    #[test]
    fn constant_functions_have_zero_error() {
        let mu = generator_presets("unipotents-rot35", 1.0).unwrap();
        let f = TestFunction::Constant { value: 0.7 };
        let h = haar_integral(&f, 10, Seed::new(1));
        let sampler = AtomSampler::new(&mu);
        let x0 = SpacePoint::identity_coset();
        for n in [0, 5, 20] {
            let v: Vec<f64> = (0..100).map(|t| f.eval(&sampler.endpoint(&x0, n, &mut Seed::new(3).with_stream(t).rng()))).collect();
            assert!((mean_se(&v).0 - h.value).abs() < 1e-14);
        }
    }

    #[test]
    fn gap_correlations_at_zero_match_the_norm() {
        let mu = generator_presets("unipotents-rot35", 1.0).unwrap();
        let p = GapParams {
            bumps: 2,
            n_max: 3,
            haar_count: 20_000,
            quadrature_samples: 100_000,
            ..Default::default()
        };
        let rep = spectral_gap_estimate(&mu, &p, Seed::new(4)).unwrap();
        assert!(rep.verdict("c0_max_z").unwrap().pass, "{:?}", rep.estimates);
    }
}

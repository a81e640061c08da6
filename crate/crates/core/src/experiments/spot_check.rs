//! Monte Carlo against exact convolution for small walks.

use super::{ordered_sums, Table};
use crate::error::{Error, Result};
use crate::lattice::SpacePoint;
use crate::measures::FiniteSupportMeasure;
use crate::rng::Seed;
use crate::walk::AtomSampler;

pub const MAX_SPOT_ATOMS: usize = 6;
pub const MAX_SPOT_STEPS: usize = 3;

pub struct Quantity<'a> {
    pub name: String,
    pub f: Box<dyn Fn(&SpacePoint) -> f64 + Sync + 'a>,
}

impl<'a> Quantity<'a> {
    pub fn new(name: impl Into<String>, f: impl Fn(&SpacePoint) -> f64 + Sync + 'a) -> Self {
        Self {
            name: name.into(),
            f: Box::new(f),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpotSummary {
    pub table: Table,
    pub passed: usize,
    pub total: usize,
}

/// For each quantity and each `n ≤ 3`, the mean of `F(Z_n ⋯ Z₁ x0)` over
/// `trials` walks against `Σ w F(g x0)` over the atoms of `μ^{*n}`. A check
/// passes when the difference is at most `sigmas` standard errors, the error
/// being the exact standard deviation over `√trials`.
pub fn spot_checks(
    mu: &FiniteSupportMeasure,
    x0: &SpacePoint,
    quantities: &[Quantity],
    n_list: &[usize],
    trials: usize,
    sigmas: f64,
    seed: Seed,
) -> Result<SpotSummary> {
    if mu.len() > MAX_SPOT_ATOMS {
        return Err(Error::InvalidArgument(format!("spot checks need at most {MAX_SPOT_ATOMS} atoms, got {}", mu.len())));
    }
    if let Some(n) = n_list.iter().find(|&&n| n > MAX_SPOT_STEPS) {
        return Err(Error::InvalidArgument(format!("spot checks need n ≤ {MAX_SPOT_STEPS}, got {n}")));
    }
    let sampler = AtomSampler::new(mu);
    let mut table = Table::new("spot_check", &["quantity", "n", "exact", "exact_sd", "mc", "sigma", "z", "pass"]);
    let (mut passed, mut total) = (0, 0);
    for &n in n_list {
        let exact = mu.power(n)?.pushforward(x0);
        let s = seed.derive(n as u64);
        let sums = ordered_sums(trials, quantities.len(), |t, acc| {
            let y = sampler.endpoint(x0, n, &mut s.with_stream(t as u64).rng());
            for (a, q) in acc.iter_mut().zip(quantities) {
                *a += (q.f)(&y);
            }
        });
        for (q, sum) in quantities.iter().zip(sums) {
            let m1: f64 = exact.iter().map(|(p, w)| w * (q.f)(p)).sum();
            let m2: f64 = exact.iter().map(|(p, w)| w * (q.f)(p).powi(2)).sum();
            let sd = (m2 - m1 * m1).max(0.0).sqrt();
            let sigma = sd / (trials as f64).sqrt();
            let mc = sum / trials as f64;
            let diff = (mc - m1).abs();
            let pass = diff <= sigmas * sigma + 1e-12;
            let z = if sigma > 0.0 { diff / sigma } else { 0.0 };
            passed += pass as usize;
            total += 1;
            table.push(vec![
                q.name.clone().into(),
                n.into(),
                m1.into(),
                sd.into(),
                mc.into(),
                sigma.into(),
                z.into(),
                pass.into(),
            ]);
        }
    }
    Ok(SpotSummary { table, passed, total })
}

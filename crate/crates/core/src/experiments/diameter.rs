use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ols, Cell, ExperimentReport, Table, Verdict};
use crate::error::{Error, Result};
use crate::lattice::net::{net_with_patience, DEFAULT_FILL_PATIENCE};
use crate::lattice::{CosetIndex, HeightParams, SpacePoint};
use crate::measures::FiniteSupportMeasure;
use crate::walk::{orbit_ball_bfs, BfsConfig, DEFAULT_NODE_BUDGET};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiameterParams {
    /// Strictly descending radii.
    pub r_grid: Vec<f64>,
    /// BFS dedup resolution is `min(r_grid)/dedup_factor`.
    pub dedup_factor: f64,
    /// Points above height `h_cap_factor/min(r_grid)` are parked.
    pub h_cap_factor: f64,
    pub l_max: usize,
    pub node_budget: usize,
    pub fill_patience: usize,
    pub min_r2: f64,
    pub net_exponent_target: f64,
    pub net_exponent_tol: f64,
}

impl Default for DiameterParams {
    fn default() -> Self {
        Self {
            r_grid: vec![0.4, 0.3, 0.2, 0.15, 0.1, 0.07, 0.05],
            dedup_factor: 4.0,
            h_cap_factor: 2.0,
            l_max: 200,
            node_budget: DEFAULT_NODE_BUDGET,
            fill_patience: DEFAULT_FILL_PATIENCE,
            min_r2: 0.9,
            net_exponent_target: -3.0,
            net_exponent_tol: 0.4,
        }
    }
}

/// Smallest ℓ such that every point of an r-net of `X(1/r)` lies within r of
/// the orbit ball `S^{≤ℓ}x0`, for each r. One BFS at the finest dedup
/// resolution serves all radii, so `diam_r` is monotone in r by construction.
pub fn diameter_estimate(
    s: &FiniteSupportMeasure,
    x0: &SpacePoint,
    p: &DiameterParams,
    height: &HeightParams,
) -> Result<ExperimentReport> {
    if p.r_grid.is_empty() || p.r_grid.windows(2).any(|w| !(w[0] > w[1])) || p.r_grid.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidArgument("r_grid must be positive and strictly descending".into()));
    }
    let r_min = *p.r_grid.last().unwrap();
    let nets: Vec<Vec<SpacePoint>> = p
        .r_grid
        .par_iter()
        .map(|&r| net_with_patience((1.0 / r).max(1.0), r, height, p.fill_patience))
        .collect::<Result<_>>()?;

    let k = p.r_grid.len();
    let mut uncovered = nets.clone();
    let mut diam: Vec<Option<usize>> = vec![None; k];
    let mut orbit_size = vec![0usize; k];
    let mut stored = 0usize;
    let mut coverage = Table::new("coverage", &["r", "layer", "orbit_points", "covered_fraction"]);
    let cfg = BfsConfig {
        l_max: p.l_max,
        dedup_r: r_min / p.dedup_factor,
        h_cap: p.h_cap_factor / r_min,
        params: *height,
        node_budget: p.node_budget,
        keep_layers: false,
    };
    let bfs = orbit_ball_bfs(s, x0, &cfg, |layer, points| {
        stored += points.len();
        for i in 0..k {
            if diam[i].is_some() {
                continue;
            }
            let r = p.r_grid[i];
            let mut idx = CosetIndex::new(r);
            for q in points {
                idx.insert(*q);
            }
            uncovered[i] = uncovered[i].par_iter().filter(|q| !idx.any_within(q, r)).copied().collect();
            let frac = 1.0 - uncovered[i].len() as f64 / nets[i].len() as f64;
            coverage.push(vec![r.into(), layer.into(), stored.into(), frac.into()]);
            if uncovered[i].is_empty() {
                diam[i] = Some(layer);
                orbit_size[i] = stored;
            }
        }
        diam.iter().all(Option::is_some)
    });

    let mut report = ExperimentReport::new("diameter");
    let mut layers = Table::new("layers", &["layer", "candidates", "new_points", "dedup_losses", "parked"]);
    match &bfs {
        Ok(res) => {
            for l in &res.layers {
                layers.push(vec![l.index.into(), l.candidates.into(), l.new_points.into(), l.dedup_losses.into(), l.parked.into()]);
            }
            report.estimate("parked_points", res.parked.len() as f64);
        }
        Err(e) => {
            report.partial = true;
            report.notes.push(format!("BFS stopped: {e}"));
        }
    }
    if diam.iter().any(Option::is_none) && !report.partial {
        report.partial = true;
        report.notes.push(format!("some radii not covered within l_max = {}", p.l_max));
    }

    let mut table = Table::new(
        "diameter",
        &["r", "log_inv_r", "net_size", "diam", "orbit_points", "dedup_r", "covered_fraction"],
    );
    let (mut fx, mut fy) = (Vec::new(), Vec::new());
    for i in 0..k {
        let r = p.r_grid[i];
        let frac = 1.0 - uncovered[i].len() as f64 / nets[i].len() as f64;
        table.push(vec![
            r.into(),
            (1.0 / r).ln().into(),
            nets[i].len().into(),
            diam[i].map_or(Cell::Int(-1), |d| d.into()),
            orbit_size[i].into(),
            cfg.dedup_r.into(),
            frac.into(),
        ]);
        if let Some(d) = diam[i] {
            fx.push((1.0 / r).ln());
            fy.push(d as f64);
        }
    }
    let fit = ols(&fx, &fy);
    report.fit("diam_vs_log_inv_r", fit);
    let net_fit = ols(
        &p.r_grid.iter().map(|r| r.ln()).collect::<Vec<_>>(),
        &nets.iter().map(|n| (n.len() as f64).ln()).collect::<Vec<_>>(),
    );
    report.fit("log_net_size_vs_log_r", net_fit);
    report.estimate("bfs_points", stored as f64);

    let (r2, slope) = fit.map_or((f64::NAN, f64::NAN), |f| (f.r2, f.slope));
    report.verdicts.push(Verdict::at_least("diam_fit_r2", r2, p.min_r2));
    report.verdicts.push(Verdict::above("diam_fit_slope", slope, 0.0));
    let exp_err = net_fit.map_or(f64::NAN, |f| (f.slope - p.net_exponent_target).abs());
    report.verdicts.push(Verdict::at_most("net_exponent_error", exp_err, p.net_exponent_tol));
    if report.partial {
        report.verdicts.push(Verdict::at_least("all_radii_covered", 0.0, 1.0));
    }
    report.tables = vec![table, coverage, layers];
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::generator_presets;

    fn small(r_grid: Vec<f64>, dedup_factor: f64) -> DiameterParams {
        DiameterParams {
            r_grid,
            dedup_factor,
            fill_patience: 2000,
            ..Default::default()
        }
    }

    #[test]
    fn huge_radius_needs_no_steps() {
        let mu = generator_presets("unipotents-rot35", 1.0).unwrap();
        let rep = diameter_estimate(&mu, &SpacePoint::identity_coset(), &small(vec![3.5], 4.0), &HeightParams::default()).unwrap();
        let t = rep.table("diameter").unwrap();
        assert_eq!(t.rows[0][3], Cell::Int(0));
    }

    #[test]
    fn diameters_are_monotone_and_dedup_refinement_helps() {
        let mu = generator_presets("unipotents-rot35", 1.0).unwrap();
        let x0 = SpacePoint::identity_coset();
        let h = HeightParams::default();
        let coarse = diameter_estimate(&mu, &x0, &small(vec![0.5, 0.4, 0.3], 2.0), &h).unwrap();
        let fine = diameter_estimate(&mu, &x0, &small(vec![0.5, 0.4, 0.3], 4.0), &h).unwrap();
        let diam = |rep: &ExperimentReport| -> Vec<i64> {
            rep.table("diameter")
                .unwrap()
                .rows
                .iter()
                .map(|r| match r[3] {
                    Cell::Int(d) => d,
                    _ => unreachable!(),
                })
                .collect()
        };
        let (dc, df) = (diam(&coarse), diam(&fine));
        assert!(dc.windows(2).all(|w| w[0] <= w[1]), "{dc:?}");
        assert!(df.iter().all(|&d| d >= 0));
        // halving dedup_r can only add orbit points at a fixed layer
        let frac = |rep: &ExperimentReport, r: f64, layer: i64| -> f64 {
            rep.table("coverage")
                .unwrap()
                .rows
                .iter()
                .filter(|row| row[0] == Cell::Float(r) && row[1] == Cell::Int(layer))
                .map(|row| match row[3] {
                    Cell::Float(f) => f,
                    _ => unreachable!(),
                })
                .next()
                .unwrap_or(1.0)
        };
        for layer in 0..=*dc.iter().max().unwrap() {
            assert!(frac(&fine, 0.3, layer) >= frac(&coarse, 0.3, layer), "layer {layer}");
        }
    }

    #[test]
    fn rejects_unsorted_grid() {
        let mu = generator_presets("unipotents-rot35", 1.0).unwrap();
        assert!(diameter_estimate(&mu, &SpacePoint::identity_coset(), &small(vec![0.2, 0.3], 4.0), &HeightParams::default()).is_err());
    }
}

//! Running configured experiments and writing their outputs.
//!
//! An output directory holds `manifest.json`, one `<table>.csv` per result
//! table and a one-line `summary.jsonl`. CSV files start with a header; floats
//! carry 17 significant digits and non-finite values are written `nan`, `inf`
//! or `-inf`.

pub mod config;

use std::fs;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

pub use config::{parse_config, parse_config_for, MeasureSpec, Params, PointSpec, RunConfig, EXPERIMENTS};

use crate::error::{Error, Result};
use crate::experiments::diameter::diameter_estimate;
use crate::experiments::dimension::{flattening_estimate, high_dimension, smoothed_density_check};
use crate::experiments::equidist::{equidistribution_error, orbit_average, spectral_gap_estimate};
use crate::experiments::hitting::{density_probability, hitting_probability, point};
use crate::experiments::nondiv::{contraction_check, non_divergence};
use crate::experiments::spot_check::{spot_checks, Quantity, SpotSummary};
use crate::experiments::{standard_test_functions, Cell, ExperimentReport, Table, Verdict};
use crate::lattice::{dist_x_below, SpacePoint};
use crate::measures::FiniteSupportMeasure;
use crate::walk::sample_trajectory;

pub const BUDGET_ENV: &str = "HOMWALK_BUDGET_MB";
/// Rough bytes held per convolution atom and per stored BFS point.
const BYTES_PER_ATOM: usize = 128;
const BYTES_PER_NODE: usize = 128;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VERDICT: i32 = 2;

/// Applies `budgets` and the `HOMWALK_BUDGET_MB` cap to the experiment parameters.
pub fn apply_budgets(cfg: &mut RunConfig) {
    let cap_mb: Option<usize> = std::env::var(BUDGET_ENV).ok().and_then(|s| s.trim().parse().ok());
    let cap = |b: usize, per: usize| match cap_mb {
        Some(mb) => b.min(mb.saturating_mul(1 << 20) / per),
        None => b,
    };
    let (atoms, nodes) = (cfg.budgets.atoms, cfg.budgets.nodes);
    match &mut cfg.params {
        Params::Diameter(p) => p.node_budget = cap(nodes.unwrap_or(p.node_budget), BYTES_PER_NODE),
        Params::Flatten(p) => p.atom_budget = cap(atoms.unwrap_or(p.atom_budget), BYTES_PER_ATOM),
        Params::Dimension(p) => p.atom_budget = cap(atoms.unwrap_or(p.atom_budget), BYTES_PER_ATOM),
        Params::Smoothed(p) => p.atom_budget = cap(atoms.unwrap_or(p.atom_budget), BYTES_PER_ATOM),
        _ => {}
    }
}

/// The measure driving the walk of each experiment.
fn walk_measure(cfg: &RunConfig) -> Result<FiniteSupportMeasure> {
    match cfg.params {
        Params::Flatten(_) | Params::Dimension(_) | Params::Smoothed(_) => cfg.measure_d_spec().build(),
        _ => cfg.measure.build(),
    }
}

fn walk_experiment(cfg: &RunConfig, p: &config::WalkParams) -> Result<ExperimentReport> {
    use rayon::prelude::*;
    let mu = cfg.measure.build()?;
    let x0 = cfg.x0.build()?;
    let h = cfg.height();
    let fs = standard_test_functions(p.bumps, p.smooth, cfg.seed.derive_str("functions"));
    let mut cps: Vec<usize> = std::iter::successors(Some(100usize), |c| Some(c * 10)).take_while(|&c| c <= p.n_steps).collect();
    cps.push(p.n_steps + 1);
    let trajs: Vec<_> = (0..p.trajectories)
        .into_par_iter()
        .map(|t| sample_trajectory(&mu, &x0, p.n_steps, cfg.seed.with_stream(t as u64)).with_heights(&mu, &h))
        .collect();
    let mut steps = Table::new("walk", &["trajectory", "step", "atom", "x", "y", "theta", "height"]);
    let mut avg = Table::new("orbit_average", &["trajectory", "n", "function", "average"]);
    for (t, tr) in trajs.iter().enumerate() {
        let pts = tr.points.as_ref().expect("cached");
        let hts = tr.heights.as_ref().expect("cached");
        for (k, (q, ht)) in pts.iter().zip(hts).enumerate().take(p.max_rows + 1) {
            let atom = if k == 0 { Cell::Int(-1) } else { (tr.increments[k - 1] as usize).into() };
            let (x, y, th) = q.coords();
            steps.push(vec![t.into(), k.into(), atom, x.into(), y.into(), th.into(), (*ht).into()]);
        }
        let a = orbit_average(tr, &fs, &cps)?;
        for (ci, &c) in cps.iter().enumerate() {
            for (j, v) in a[ci].iter().enumerate() {
                avg.push(vec![t.into(), c.into(), j.into(), (*v).into()]);
            }
        }
    }
    let mut report = ExperimentReport::new("walk");
    let max_ht = trajs.iter().flat_map(|t| t.heights.as_ref().unwrap().iter().copied()).fold(1.0, f64::max);
    report.estimate("max_height", max_ht);
    report.tables = vec![steps, avg];
    Ok(report)
}

/// Runs the configured experiment in the calling thread pool.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentReport> {
    let x0 = cfg.x0.build()?;
    let h = cfg.height();
    let s = cfg.seed;
    let mut report = match &cfg.params {
        Params::Walk(p) => walk_experiment(cfg, p)?,
        Params::Diameter(p) => diameter_estimate(&cfg.measure.build()?, &x0, p, &h)?,
        Params::Density(p) => density_probability(&cfg.measure.build()?, &x0, p, &h, s)?,
        Params::Hitting(p) => hitting_probability(&cfg.measure.build()?, p, s)?,
        Params::NonDivergence(p) => non_divergence(&cfg.measure.build()?, &x0, p, &h, s)?,
        Params::Contraction(p) => contraction_check(&cfg.measure.build()?, p, &h, s)?,
        Params::Flatten(p) => flattening_estimate(&cfg.measure_d_spec().build()?, p, s)?,
        Params::Dimension(p) => high_dimension(&cfg.measure_d_spec().build()?, &x0, p, s)?,
        Params::Smoothed(p) => smoothed_density_check(&cfg.measure_d_spec().build()?, &x0, p, &h, s)?,
        Params::Equidist(p) => {
            let d = cfg.measure_d.as_ref().map(MeasureSpec::build).transpose()?;
            equidistribution_error(&cfg.measure.build()?, d.as_ref(), &x0, p, s)?
        }
        Params::Gap(p) => spectral_gap_estimate(&cfg.measure.build()?, p, s)?,
    };
    report.config_hash = cfg.hash();
    report.seed = cfg.seed.to_hex();
    Ok(report)
}

/// Quantities each experiment measures, as functions of the walk endpoint.
fn spot_quantities<'a>(cfg: &'a RunConfig, x0: SpacePoint) -> Vec<Quantity<'a>> {
    let h = cfg.height();
    let near = |name: String, c: SpacePoint, r: f64| Quantity::new(name, move |y: &SpacePoint| dist_x_below(y, &c, r).is_some() as u8 as f64);
    let functions = |bumps, smooth| -> Vec<Quantity<'a>> {
        standard_test_functions(bumps, smooth, cfg.seed.derive_str("functions"))
            .into_iter()
            .enumerate()
            .map(|(j, f)| Quantity::new(format!("f{j}"), move |y: &SpacePoint| f.eval(y)))
            .collect()
    };
    match &cfg.params {
        Params::Walk(p) => functions(p.bumps, p.smooth),
        Params::Equidist(p) => functions(p.bumps, p.smooth),
        Params::Gap(p) => functions(p.bumps, 0),
        Params::Diameter(p) => p.r_grid.iter().map(|&r| near(format!("within_{r}"), x0, r)).collect(),
        Params::Density(p) => vec![near(format!("within_{}", p.r), x0, p.r)],
        Params::Hitting(p) => vec![near("hit_target".into(), point(&p.target), p.r)],
        Params::NonDivergence(p) => p
            .h_grid
            .iter()
            .map(|&t| Quantity::new(format!("height_ge_{t}"), move |y: &SpacePoint| (y.height(&h) >= t) as u8 as f64))
            .collect(),
        Params::Contraction(_) => vec![Quantity::new("height", move |y: &SpacePoint| y.height(&h))],
        Params::Flatten(p) => p.delta_grid.iter().map(|&d| near(format!("within_{d}"), x0, d)).collect(),
        Params::Dimension(p) => p.delta_grid.iter().map(|&d| near(format!("within_{d}"), x0, d)).collect(),
        Params::Smoothed(p) => vec![near(format!("within_{}", p.delta), x0, p.delta)],
    }
}

/// Monte Carlo against exact convolution for the walk of this experiment.
pub fn spot_check(cfg: &RunConfig) -> Result<SpotSummary> {
    let mu = walk_measure(cfg)?;
    let x0 = cfg.x0.build()?;
    let qs = spot_quantities(cfg, x0);
    let sc = &cfg.spot_check;
    spot_checks(&mu, &x0, &qs, &sc.n_list, sc.trials, sc.sigmas, cfg.seed.derive_str("spot-check"))
}

pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        // fold -0 into 0
        format!("{:.16e}", v + 0.0)
    }
}

fn format_cell(c: &Cell) -> String {
    match c {
        Cell::Int(i) => i.to_string(),
        Cell::Float(f) => format_float(*f),
        Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Cell::Text(s) => s.clone(),
    }
}

pub fn table_to_csv(t: &Table) -> String {
    let mut out = t.header.join(",");
    out.push('\n');
    for row in &t.rows {
        let cells: Vec<String> = row.iter().map(format_cell).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// JSON summary line: the report without tables, plus the overall verdict.
pub fn summary_line(report: &ExperimentReport) -> String {
    let mut v = serde_json::to_value(report).expect("reports serialize");
    v.as_object_mut().unwrap().insert("passed".into(), json!(report.passed()));
    v.to_string()
}

/// Runs the experiment and writes the output directory. Returns the exit code
/// (0 pass, 2 verdict failure); errors leave no CSV behind.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let mut cfg = cfg.clone();
    apply_budgets(&mut cfg);
    let start = Instant::now();
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let work = || -> Result<ExperimentReport> {
        let mut report = run_experiment(&cfg)?;
        if cfg.spot_check.enabled {
            let s = spot_check(&cfg)?;
            let frac = s.passed as f64 / s.total.max(1) as f64;
            report.estimate("spot_check_pass_fraction", frac);
            report.verdicts.push(Verdict::at_least("spot_check_pass_fraction", frac, cfg.spot_check.min_pass_fraction));
            report.tables.push(s.table);
        }
        Ok(report)
    };
    let report = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(work)?,
        None => work()?,
    };

    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    for t in &report.tables {
        let name = format!("{}.csv", t.name);
        fs::write(out.join(&name), table_to_csv(t))?;
        files.push(name);
    }
    fs::write(out.join("summary.jsonl"), summary_line(&report) + "\n")?;
    files.push("summary.jsonl".into());
    let manifest = json!({
        "experiment": cfg.experiment,
        "config_hash": report.config_hash,
        "seed": report.seed,
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix": started,
        "wall_clock_seconds": start.elapsed().as_secs_f64(),
        "threads": cfg.threads.unwrap_or_else(rayon::current_num_threads),
        "partial": report.partial,
        "passed": report.passed(),
        "files": files,
        "config": cfg.to_value(),
    });
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest).unwrap() + "\n")?;
    Ok(if report.passed() { EXIT_OK } else { EXIT_VERDICT })
}

/// The resolved config with documented defaults, pretty-printed.
pub fn defaults_json(experiment: &str) -> Result<String> {
    let v: Value = RunConfig::defaults(experiment)?.to_value();
    Ok(serde_json::to_string_pretty(&v).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(f64::NAN), "nan");
        assert_eq!(format_float(f64::NEG_INFINITY), "-inf");
        let x = std::f64::consts::PI;
        assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn csv_header_and_quoting() {
        let mut t = Table::new("t", &["a", "b"]);
        t.push(vec![Cell::Int(3), Cell::Text("x,y".into())]);
        assert_eq!(table_to_csv(&t), "a,b\n3,\"x,y\"\n");
    }

    #[test]
    fn budgets_are_capped_by_env() {
        let mut cfg = RunConfig::defaults("flatten").unwrap();
        cfg.budgets.atoms = Some(123);
        apply_budgets(&mut cfg);
        match cfg.params {
            Params::Flatten(p) => assert!(p.atom_budget <= 123),
            _ => unreachable!(),
        }
    }
}

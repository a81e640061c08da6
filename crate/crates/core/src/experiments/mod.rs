//! One experiment per quantitative statement: diameter growth, hitting and
//! density probabilities, non-divergence, contraction of the height, flattening
//! and dimension of convolution powers, equidistribution and spectral gap.
//!
//! Every experiment returns an [`ExperimentReport`] whose tables become CSV
//! files and whose remaining fields become one JSON summary line. Paper
//! constants are never inputs; they appear as fitted estimates with errors.

pub mod diameter;
pub mod dimension;
pub mod equidist;
pub mod functions;
pub mod hitting;
pub mod nondiv;
pub mod spot_check;
pub mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use functions::{haar_integral, standard_test_functions, HaarIntegral, TestFunction};
pub use stats::{mean_se, ols, wilson, Fit};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as i64)
    }
}

/// One CSV grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub value: f64,
    pub comparison: String,
    pub threshold: f64,
    pub pass: bool,
}

impl Verdict {
    /// `value ≤ threshold`.
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            comparison: "<=".into(),
            threshold,
            pass: value <= threshold,
        }
    }

    /// `value ≥ threshold`.
    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            comparison: ">=".into(),
            threshold,
            pass: value >= threshold,
        }
    }

    /// `value < threshold`.
    pub fn below(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            comparison: "<".into(),
            threshold,
            pass: value < threshold,
        }
    }

    /// `value > threshold`.
    pub fn above(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            comparison: ">".into(),
            threshold,
            pass: value > threshold,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub config_hash: String,
    pub seed: String,
    #[serde(skip)]
    pub tables: Vec<Table>,
    pub estimates: BTreeMap<String, f64>,
    pub fits: BTreeMap<String, Fit>,
    pub verdicts: Vec<Verdict>,
    pub notes: Vec<String>,
    /// Set when a budget stopped the run before every grid point was done.
    pub partial: bool,
}

impl ExperimentReport {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn estimate(&mut self, key: &str, v: f64) {
        self.estimates.insert(key.into(), v);
    }

    pub fn fit(&mut self, key: &str, f: Option<Fit>) {
        match f {
            Some(f) => {
                self.fits.insert(key.into(), f);
            }
            None => self.notes.push(format!("fit {key}: fewer than two distinct points")),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }
}

pub(crate) const CHUNK: usize = 1024;

/// Coordinate-wise sums of `f(t, buf)` over `t < n`. Chunks run in parallel and
/// are added in index order, so the result does not depend on the thread count.
pub(crate) fn ordered_sums(n: usize, dim: usize, f: impl Fn(usize, &mut [f64]) + Sync) -> Vec<f64> {
    use rayon::prelude::*;
    let parts: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; dim];
            for t in c * CHUNK..((c + 1) * CHUNK).min(n) {
                f(t, &mut acc);
            }
            acc
        })
        .collect();
    let mut out = vec![0.0; dim];
    for p in parts {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    out
}

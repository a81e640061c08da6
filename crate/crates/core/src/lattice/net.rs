//! Maximal separated subsets of the compact parts `X(h) = {ht ≤ h}`.

use std::f64::consts::PI;

use super::{CosetIndex, HeightParams, SpacePoint, Y_MIN};
use crate::error::{Error, Result};

/// Consecutive covered fill probes after which the net is declared covering.
pub const DEFAULT_FILL_PATIENCE: usize = 20_000;

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut out = 0.0;
    let inv = 1.0 / base as f64;
    while i > 0 {
        f *= inv;
        out += f * (i % base) as f64;
        i /= base;
    }
    out
}

/// An `r`-separated, `r`-covering subset of `X(h_bound)` (see [`net_with_patience`]).
pub fn net(h_bound: f64, r: f64, params: &HeightParams) -> Result<Vec<SpacePoint>> {
    net_with_patience(h_bound, r, params, DEFAULT_FILL_PATIENCE)
}

/// Greedy insertion over an Iwasawa grid (step `r/2` in `ln y` and θ, `r·y/2`
/// in x) in row order, followed by a Halton-sequence fill of `X(h_bound)`
/// that stops after `patience` consecutive probes already within `r`.
pub fn net_with_patience(h_bound: f64, r: f64, params: &HeightParams, patience: usize) -> Result<Vec<SpacePoint>> {
    net_index(h_bound, r, params, patience).map(CosetIndex::into_points)
}

/// As [`net_with_patience`], returning the index used to build it.
pub fn net_index(h_bound: f64, r: f64, params: &HeightParams, patience: usize) -> Result<CosetIndex> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidRadius(r));
    }
    if !(h_bound >= 1.0) {
        return Err(Error::InvalidArgument(format!("height bound must be ≥ 1, got {h_bound}")));
    }
    let y_top = params.y_for_height(h_bound).max(Y_MIN);
    let step = 0.5 * r;
    let mut idx = CosetIndex::new(r);

    let (l0, l1) = (Y_MIN.ln(), y_top.ln());
    let rows = ((l1 - l0) / step).ceil().max(0.0) as usize + 1;
    let n_theta = ((PI / step).ceil() as usize).max(1);
    for j in 0..rows {
        let y = (l0 + j as f64 * step).min(l1).exp();
        let n_x = ((1.0 / (step * y)).ceil() as usize).max(1);
        for i in 0..n_x {
            let x = -0.5 + (i as f64 + 0.5) / n_x as f64;
            if x * x + y * y < 1.0 {
                continue;
            }
            for k in 0..n_theta {
                let theta = (k as f64 + 0.5) * PI / n_theta as f64;
                let p = SpacePoint::from_coordinates(x, y, theta);
                if !idx.any_within(&p, r) {
                    idx.insert(p);
                }
            }
        }
    }

    let (inv_lo, inv_hi) = (1.0 / Y_MIN, 1.0 / y_top);
    let mut streak = 0;
    let mut i: u64 = 1;
    while streak < patience {
        let y = 1.0 / (inv_lo - radical_inverse(i, 2) * (inv_lo - inv_hi));
        let x = radical_inverse(i, 3) - 0.5;
        let theta = PI * radical_inverse(i, 5);
        i += 1;
        if x * x + y * y < 1.0 {
            continue;
        }
        let p = SpacePoint::from_coordinates(x, y, theta);
        if idx.any_within(&p, r) {
            streak += 1;
        } else {
            idx.insert(p);
            streak = 0;
        }
    }
    Ok(idx)
}

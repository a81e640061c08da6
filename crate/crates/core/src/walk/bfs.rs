use rayon::prelude::*;
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use super::AtomSampler;
use crate::error::{Error, Result};
use crate::lattice::{HeightParams, SpacePoint};
use crate::measures::FiniteSupportMeasure;

pub const DEFAULT_NODE_BUDGET: usize = 50_000_000;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BfsConfig {
    pub l_max: usize,
    /// Points sharing a dedup cell are merged; cells have diameter below this.
    pub dedup_r: f64,
    /// Points of height above this are kept but not expanded.
    pub h_cap: f64,
    pub params: HeightParams,
    pub node_budget: usize,
    /// Retain every layer in the result (otherwise only counts are kept).
    pub keep_layers: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BfsLayer {
    pub index: usize,
    pub candidates: usize,
    pub new_points: usize,
    pub dedup_losses: usize,
    pub parked: usize,
}

#[derive(Clone, Debug, Default)]
pub struct BfsResult {
    pub layers: Vec<BfsLayer>,
    /// Layer contents when `keep_layers` is set.
    pub points: Vec<Vec<SpacePoint>>,
    pub parked: Vec<SpacePoint>,
    pub stored: usize,
    /// The layer callback asked to stop before `l_max`.
    pub stopped: bool,
}

type CellKey = (i32, i64, i32);

/// Cells of side `w` in `ln y` and θ and `w·y_low` in x, where `y_low` is the
/// bottom of the `ln y` band. Two points in one cell are within hyperbolic
/// distance `2w` and turning angle `2w`, so `w = dedup_r/4` keeps merges
/// inside `dedup_r`.
fn cell_key(p: &SpacePoint, w: f64) -> CellKey {
    let band = (p.y().ln() / w).floor();
    let width = w * (band * w).exp();
    (band as i32, ((p.x() + 0.5) / width).floor() as i64, (p.theta() / w).floor() as i32)
}

/// Layers `L₀ = {x0}`, `L_{k+1} = {reduce(s·rep(p)) : s ∈ supp S, p ∈ L_k}`
/// minus every cell already seen, so the union of `L₀..L_ℓ` approximates the
/// ball `S^{≤ℓ}x0`. New points are handed to `on_layer(k, points)` (parked ones
/// included); returning true stops the search.
pub fn orbit_ball_bfs(
    s: &FiniteSupportMeasure,
    x0: &SpacePoint,
    cfg: &BfsConfig,
    mut on_layer: impl FnMut(usize, &[SpacePoint]) -> bool,
) -> Result<BfsResult> {
    if !(cfg.dedup_r > 0.0) {
        return Err(Error::InvalidRadius(cfg.dedup_r));
    }
    let w = 0.25 * cfg.dedup_r;
    let sampler = &AtomSampler::new(s);
    let n_atoms = s.len();

    let mut seen: FxHashSet<CellKey> = FxHashSet::default();
    seen.insert(cell_key(x0, w));
    let mut result = BfsResult {
        layers: vec![BfsLayer {
            index: 0,
            candidates: 1,
            new_points: 1,
            ..Default::default()
        }],
        stored: 1,
        ..Default::default()
    };
    if cfg.keep_layers {
        result.points.push(vec![*x0]);
    }
    if on_layer(0, std::slice::from_ref(x0)) {
        result.stopped = true;
        return Ok(result);
    }

    let mut frontier = vec![*x0];
    for k in 1..=cfg.l_max {
        if frontier.is_empty() {
            break;
        }
        let candidates: Vec<(SpacePoint, CellKey)> = frontier
            .par_iter()
            .flat_map_iter(|p| {
                (0..n_atoms).map(move |i| {
                    let q = sampler.step(i, p);
                    (q, cell_key(&q, w))
                })
            })
            .collect();
        let mut stats = BfsLayer {
            index: k,
            candidates: candidates.len(),
            ..Default::default()
        };
        let mut layer = Vec::new();
        let mut next = Vec::new();
        for (q, key) in candidates {
            if !seen.insert(key) {
                stats.dedup_losses += 1;
                continue;
            }
            if seen.len() > cfg.node_budget {
                return Err(Error::NodeBudgetExceeded { budget: cfg.node_budget });
            }
            layer.push(q);
            if q.height(&cfg.params) > cfg.h_cap {
                stats.parked += 1;
                result.parked.push(q);
            } else {
                next.push(q);
            }
        }
        stats.new_points = layer.len();
        result.stored += layer.len();
        result.layers.push(stats);
        let stop = on_layer(k, &layer);
        if cfg.keep_layers {
            result.points.push(layer);
        }
        frontier = next;
        if stop {
            result.stopped = true;
            break;
        }
    }
    Ok(result)
}

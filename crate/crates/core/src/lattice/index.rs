//! Spatial hash on X for radius queries.
//!
//! Points are bucketed by reduced coordinates: `ln y` in bands of width `h`,
//! `x` periodically in cells of width about `h·y_band`, θ periodically mod π.
//! If `ρ(g_p g'⁻¹) < r` for some representative `g'` of q then
//! `|ln y_p − ln y'| < r`, `|θ_p − θ'| < r (mod π)` and
//! `|x_p − x'| < 2 sinh(r/2) √(y_p y')`, so a query visits the cells around
//! every image `z' = σ z_q` that can reach the fundamental domain
//! (`Im σz_q ≥ (√3/2) e^{−r}`) and confirms candidates exactly.

use std::f64::consts::PI;

use rustc_hash::{FxHashMap, FxHashSet};

use super::metric::dist_x_below;
use super::{extended_gcd, int_to_group, IntMatrix, SpacePoint, Y_MIN};

type Key = (i32, u32, u32);

/// A query image: `M = σ₀ g_q⁻¹` and its coordinates with x folded into [−½, ½).
struct Image {
    sigma: IntMatrix,
    x_raw: f64,
    x: f64,
    y: f64,
    theta: f64,
}

#[derive(Clone, Debug)]
pub struct CosetIndex {
    cell: f64,
    n_theta: u32,
    points: Vec<SpacePoint>,
    cells: FxHashMap<Key, Vec<u32>>,
    band_lo: i32,
    band_hi: i32,
}

impl CosetIndex {
    /// An empty index tuned for queries of radius about `cell`.
    pub fn new(cell: f64) -> Self {
        assert!(cell > 0.0);
        Self {
            cell,
            n_theta: ((PI / cell).floor() as u32).max(1),
            points: Vec::new(),
            cells: FxHashMap::default(),
            band_lo: i32::MAX,
            band_hi: i32::MIN,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[SpacePoint] {
        &self.points
    }

    pub fn into_points(self) -> Vec<SpacePoint> {
        self.points
    }

    fn band(&self, y: f64) -> i32 {
        (y.ln() / self.cell).floor() as i32
    }

    fn n_x(&self, band: i32) -> u32 {
        let y_lo = (band as f64 * self.cell).exp();
        ((1.0 / (self.cell * y_lo)).floor() as u32).clamp(1, 1 << 20)
    }

    fn x_cell(&self, x: f64, n: u32) -> u32 {
        let t = (x + 0.5).rem_euclid(1.0);
        ((t * n as f64) as u32).min(n - 1)
    }

    fn theta_cell(&self, theta: f64) -> u32 {
        let t = theta.rem_euclid(PI) / PI;
        ((t * self.n_theta as f64) as u32).min(self.n_theta - 1)
    }

    fn key(&self, p: &SpacePoint) -> Key {
        let b = self.band(p.y());
        (b, self.x_cell(p.x(), self.n_x(b)), self.theta_cell(p.theta()))
    }

    pub fn insert(&mut self, p: SpacePoint) -> u32 {
        let id = self.points.len() as u32;
        let key = self.key(&p);
        self.band_lo = self.band_lo.min(key.0);
        self.band_hi = self.band_hi.max(key.0);
        self.cells.entry(key).or_default().push(id);
        self.points.push(p);
        id
    }

    fn images(q: &SpacePoint, r: f64) -> Vec<Image> {
        let (xq, yq) = (q.x(), q.y());
        let gq_inv = q.rep().inverse();
        let bound = yq * r.exp() / Y_MIN;
        let c_max = (bound.sqrt() / yq).floor() as i64;
        let mut out = Vec::new();
        for c in 0..=c_max {
            let cf = c as f64;
            let rest = bound - cf * cf * yq * yq;
            if rest < 0.0 {
                continue;
            }
            let (d_lo, d_hi) = if c == 0 {
                (1, 1)
            } else {
                let s = rest.sqrt();
                ((-cf * xq - s).ceil() as i64, (-cf * xq + s).floor() as i64)
            };
            for d in d_lo..=d_hi {
                let (g, s1, t1) = extended_gcd(d, c);
                if g != 1 {
                    continue;
                }
                let sigma = [s1, -t1, c, d];
                let [m11, m12, m21, m22] = int_to_group(&sigma).mul_raw(&gq_inv).entries();
                let n2 = m21 * m21 + m22 * m22;
                let x_raw = (m11 * m21 + m12 * m22) / n2;
                out.push(Image {
                    sigma,
                    x_raw,
                    x: (x_raw + 0.5).rem_euclid(1.0) - 0.5,
                    y: 1.0 / n2,
                    theta: m21.atan2(m22),
                });
            }
        }
        out
    }

    fn candidates(&self, r: f64, images: &[Image], mut f: impl FnMut(u32, &Image) -> bool) {
        if self.points.is_empty() {
            return;
        }
        let t_half = (r / PI * self.n_theta as f64).ceil() as i64;
        let sh = 2.0 * (0.5 * r).sinh();
        for im in images {
            let b_lo = ((im.y.ln() - r) / self.cell).floor() as i32;
            let b_hi = ((im.y.ln() + r) / self.cell).floor() as i32;
            let it = self.theta_cell(im.theta) as i64;
            let th_cells: Vec<u32> = if 2 * t_half + 1 >= self.n_theta as i64 {
                (0..self.n_theta).collect()
            } else {
                (it - t_half..=it + t_half)
                    .map(|k| k.rem_euclid(self.n_theta as i64) as u32)
                    .collect()
            };
            for b in b_lo.max(self.band_lo)..=b_hi.min(self.band_hi) {
                let n = self.n_x(b);
                let y_hi = ((b + 1) as f64 * self.cell).exp();
                let dx = sh * (im.y * y_hi).sqrt();
                let x_cells: Vec<u32> = if 2.0 * dx >= 1.0 {
                    (0..n).collect()
                } else {
                    let lo = ((im.x - dx + 0.5) * n as f64).floor() as i64;
                    let hi = ((im.x + dx + 0.5) * n as f64).floor() as i64;
                    let mut v: Vec<u32> = (lo..=hi).map(|k| k.rem_euclid(n as i64) as u32).collect();
                    v.sort_unstable();
                    v.dedup();
                    v
                };
                for &ix in &x_cells {
                    for &ith in &th_cells {
                        if let Some(ids) = self.cells.get(&(b, ix, ith)) {
                            for &id in ids {
                                if f(id, im) {
                                    return;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Fast confirmation through the image that produced the candidate: an
    /// upper bound on `d_X`, exact whenever the nearest shift is unambiguous.
    fn quick_check(p: &SpacePoint, q: &SpacePoint, im: &Image, r: f64) -> (bool, bool) {
        let gq_inv = q.rep().inverse();
        let k0 = (p.x() - im.x_raw).round() as i64;
        let [a, b, c, d] = im.sigma;
        for k in [k0, k0 - 1, k0 + 1] {
            let lam = [a + k * c, b + k * d, c, d];
            let u = p.rep().mul_raw(&int_to_group(&lam)).mul_raw(&gq_inv);
            if u.displacement() < r || u.neg().displacement() < r {
                return (true, true);
            }
        }
        let sure = 2.0 * (0.5 * r).sinh() * (p.y() * im.y).sqrt() < 0.5;
        (false, sure)
    }

    /// Whether some stored point lies within `d_X < r` of `q`.
    pub fn any_within(&self, q: &SpacePoint, r: f64) -> bool {
        let mut found = false;
        self.scan(q, r, |_| {
            found = true;
            true
        });
        found
    }

    /// Calls `hit(id)` once per stored point with `d_X < r`, in visiting order,
    /// until it returns true.
    fn scan(&self, q: &SpacePoint, r: f64, mut hit: impl FnMut(u32) -> bool) {
        let images = Self::images(q, r);
        // ids already decided through another image
        let mut decided: FxHashSet<u32> = FxHashSet::default();
        self.candidates(r, &images, |id, im| {
            if decided.contains(&id) {
                return false;
            }
            let p = &self.points[id as usize];
            let inside = match Self::quick_check(p, q, im, r) {
                (true, _) => true,
                // another image may still reach p
                (false, true) => return false,
                (false, false) => dist_x_below(p, q, r).is_some(),
            };
            decided.insert(id);
            inside && hit(id)
        });
    }

    /// Sorted ids of all stored points with `d_X < r` from `q`.
    pub fn within(&self, q: &SpacePoint, r: f64) -> Vec<u32> {
        let mut hits = Vec::new();
        self.scan(q, r, |id| {
            hits.push(id);
            false
        });
        hits.sort_unstable();
        hits
    }

    /// Nearest stored point within `r`, as `(id, d_X)`.
    pub fn nearest_within(&self, q: &SpacePoint, r: f64) -> Option<(u32, f64)> {
        self.within(q, r)
            .into_iter()
            .filter_map(|id| dist_x_below(&self.points[id as usize], q, r).map(|d| (id, d)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{dist_x, haar_sample};
    use crate::rng::Seed;

    #[test]
    fn within_matches_linear_scan() {
        let pts = haar_sample(3000, 30.0, Seed::new(1)).points;
        let queries = haar_sample(200, 30.0, Seed::new(2)).points;
        for r in [0.15, 0.4, 1.0] {
            let mut idx = CosetIndex::new(r);
            for p in &pts {
                idx.insert(*p);
            }
            for q in &queries {
                let got = idx.within(q, r);
                let want: Vec<u32> = pts
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| dist_x(p, q) < r)
                    .map(|(i, _)| i as u32)
                    .collect();
                assert_eq!(got, want, "r = {r}");
                assert_eq!(idx.any_within(q, r), !want.is_empty());
            }
        }
    }

    #[test]
    fn nearest_is_exact() {
        let pts = haar_sample(2000, 10.0, Seed::new(3)).points;
        let mut idx = CosetIndex::new(0.5);
        for p in &pts {
            idx.insert(*p);
        }
        for q in haar_sample(100, 10.0, Seed::new(4)).points {
            let best = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (i as u32, dist_x(p, &q)))
                .filter(|(_, d)| *d < 0.5)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            let got = idx.nearest_within(&q, 0.5);
            assert_eq!(got.map(|g| g.0), best.map(|b| b.0));
        }
    }
}

//! Finitely supported probability measures on G and their convolutions.

pub mod diophantine;
pub mod presets;

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::GroupElement;
use crate::lattice::{reduce, CosetIndex, SpacePoint};

pub use diophantine::{diophantine_diagnostic, DiophantineReport, Subgroup, SubgroupFamily};
pub use presets::generator_presets;

pub const DEFAULT_MERGE_TOL: f64 = 1e-9;
pub const ATOM_BUDGET: usize = 10_000_000;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FiniteSupportMeasure {
    atoms: Vec<(GroupElement, f64)>,
    merge_tol: f64,
}

type CellKey = [i64; 4];

/// Grid hash on matrix entries. `ρ(g h⁻¹) < tol` forces every entry of `g − h`
/// below `‖gh⁻¹ − I‖_op ‖h‖_op ≤ 2·tol·scale`, so cells of side `4·tol·scale`
/// leave true neighbours at most one cell apart.
pub(crate) struct EntryGrid {
    cell: f64,
    map: FxHashMap<CellKey, Vec<usize>>,
}

impl EntryGrid {
    pub(crate) fn new(tol: f64, scale: f64) -> Self {
        Self {
            cell: (4.0 * tol * scale.max(1.0)).max(f64::MIN_POSITIVE),
            map: FxHashMap::default(),
        }
    }

    fn key(&self, g: &GroupElement) -> CellKey {
        g.entries().map(|v| (v / self.cell).floor() as i64)
    }

    pub(crate) fn insert(&mut self, g: &GroupElement, id: usize) {
        self.map.entry(self.key(g)).or_default().push(id);
    }

    fn neighbour_cells(&self, g: &GroupElement) -> impl Iterator<Item = &Vec<usize>> + '_ {
        let k = self.key(g);
        (0..81usize).filter_map(move |d| {
            let off = [d % 3, d / 3 % 3, d / 9 % 3, d / 27];
            let key = [
                k[0] + off[0] as i64 - 1,
                k[1] + off[1] as i64 - 1,
                k[2] + off[2] as i64 - 1,
                k[3] + off[3] as i64 - 1,
            ];
            self.map.get(&key)
        })
    }

    fn find(&self, g: &GroupElement, mut pred: impl FnMut(usize) -> bool) -> Option<usize> {
        self.neighbour_cells(g).flat_map(|ids| ids.iter().copied()).find(|&id| pred(id))
    }

    /// Every id stored within `tol` of g, plus some further ones.
    pub(crate) fn for_each_candidate(&self, g: &GroupElement, mut f: impl FnMut(usize)) {
        for ids in self.neighbour_cells(g) {
            ids.iter().for_each(|&id| f(id));
        }
    }
}

fn entry_order(a: &GroupElement, b: &GroupElement) -> std::cmp::Ordering {
    let (x, y) = (a.entries(), b.entries());
    x.iter()
        .zip(y.iter())
        .map(|(p, q)| p.total_cmp(q))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Sorts by entries and merges atoms within `tol` in the metric, keeping the
/// first element of each cluster and adding weights.
fn merge_atoms(mut atoms: Vec<(GroupElement, f64)>, tol: f64) -> Vec<(GroupElement, f64)> {
    atoms.par_sort_by(|a, b| entry_order(&a.0, &b.0));
    let scale = atoms.iter().fold(1.0f64, |m, (g, _)| m.max(g.max_abs_entry()));
    let mut grid = EntryGrid::new(tol, scale);
    let mut out: Vec<(GroupElement, f64)> = Vec::with_capacity(atoms.len());
    for (g, w) in atoms {
        match grid.find(&g, |id| out[id].0.dist(&g) < tol) {
            Some(id) => out[id].1 += w,
            None => {
                grid.insert(&g, out.len());
                out.push((g, w));
            }
        }
    }
    out
}

impl FiniteSupportMeasure {
    /// Validates positivity, normalizes weights summing to 1 within `1e-6`,
    /// and merges atoms closer than `merge_tol`.
    pub fn new(atoms: Vec<(GroupElement, f64)>, merge_tol: f64) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidArgument("measure has no atoms".into()));
        }
        if let Some((_, w)) = atoms.iter().find(|(_, w)| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(format!("atom weight {w} is not positive")));
        }
        let total: f64 = atoms.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        let atoms = atoms.into_iter().map(|(g, w)| (g, w / total)).collect();
        Ok(Self {
            atoms: merge_atoms(atoms, merge_tol),
            merge_tol,
        })
    }

    pub fn dirac(g: GroupElement) -> Self {
        Self {
            atoms: vec![(g, 1.0)],
            merge_tol: DEFAULT_MERGE_TOL,
        }
    }

    pub fn uniform(elements: Vec<GroupElement>) -> Result<Self> {
        let w = 1.0 / elements.len() as f64;
        Self::new(elements.into_iter().map(|g| (g, w)).collect(), DEFAULT_MERGE_TOL)
    }

    pub fn atoms(&self) -> &[(GroupElement, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn merge_tol(&self) -> f64 {
        self.merge_tol
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|(_, w)| w).sum()
    }

    /// Cumulative weights, for inverse-CDF sampling.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.atoms
            .iter()
            .map(|(_, w)| {
                acc += w;
                acc
            })
            .collect()
    }

    /// `μ̌ = ι_*μ`, the law of `g⁻¹`.
    pub fn inverse(&self) -> Self {
        Self {
            atoms: merge_atoms(self.atoms.iter().map(|(g, w)| (g.inverse(), *w)).collect(), self.merge_tol),
            merge_tol: self.merge_tol,
        }
    }

    /// `R(μ) = max_{g ∈ supp μ} d(g, I)`.
    pub fn support_radius(&self) -> f64 {
        self.atoms.iter().fold(0.0, |m, (g, _)| m.max(g.displacement()))
    }

    pub fn is_symmetric(&self) -> bool {
        let scale = self.atoms.iter().fold(1.0f64, |m, (g, _)| m.max(g.max_abs_entry()));
        let mut grid = EntryGrid::new(self.merge_tol, scale);
        for (i, (g, _)) in self.atoms.iter().enumerate() {
            grid.insert(g, i);
        }
        self.atoms.iter().all(|(g, w)| {
            let gi = g.inverse();
            grid.find(&gi, |id| {
                let (h, v) = &self.atoms[id];
                h.dist(&gi) < self.merge_tol && (v - w).abs() <= 1e-9
            })
            .is_some()
        })
    }

    /// `μ * ν`, the law of `gh` for independent `g ~ μ`, `h ~ ν`.
    pub fn convolve(&self, other: &Self) -> Result<Self> {
        self.convolve_with_budget(other, ATOM_BUDGET)
    }

    pub fn convolve_with_budget(&self, other: &Self, budget: usize) -> Result<Self> {
        let needed = self.atoms.len().saturating_mul(other.atoms.len());
        if needed > budget {
            return Err(Error::AtomBudgetExceeded { needed, budget });
        }
        let products: Vec<(GroupElement, f64)> = self
            .atoms
            .par_iter()
            .flat_map_iter(|(g, v)| other.atoms.iter().map(move |(h, w)| (g * h, v * w)))
            .collect();
        let tol = self.merge_tol.max(other.merge_tol);
        Ok(Self {
            atoms: merge_atoms(products, tol),
            merge_tol: tol,
        })
    }

    /// `μ^{*n}`, with `μ^{*0} = δ_e`.
    pub fn power(&self, n: usize) -> Result<Self> {
        self.power_with_budget(n, ATOM_BUDGET)
    }

    pub fn power_with_budget(&self, n: usize, budget: usize) -> Result<Self> {
        let mut acc = Self {
            atoms: vec![(GroupElement::identity(), 1.0)],
            merge_tol: self.merge_tol,
        };
        for _ in 0..n {
            acc = acc.convolve_with_budget(self, budget)?;
        }
        Ok(acc)
    }

    /// Pushforward `μ * δ_x` to X. Atoms are merged when their images lie within
    /// `merge_tol` in `d_X`, which also catches representatives of one coset that
    /// differ on the boundary of the fundamental domain.
    pub fn pushforward(&self, x0: &SpacePoint) -> Vec<(SpacePoint, f64)> {
        let lifted: Vec<(GroupElement, f64)> = self.atoms.par_iter().map(|(g, w)| (g.mul_raw(x0.rep()).renormalized(), *w)).collect();
        let pts: Vec<(SpacePoint, f64)> = merge_atoms(lifted, self.merge_tol).par_iter().map(|(g, w)| (reduce(g), *w)).collect();
        let mut index = CosetIndex::new(self.merge_tol.max(1e-6));
        let mut out: Vec<(SpacePoint, f64)> = Vec::with_capacity(pts.len());
        for (p, w) in pts {
            match index.nearest_within(&p, self.merge_tol.max(1e-12)) {
                Some((id, _)) => out[id as usize].1 += w,
                None => {
                    index.insert(p);
                    out.push((p, w));
                }
            }
        }
        out
    }

    /// Total variation distance, pairing atoms within the merge tolerance.
    pub fn total_variation(&self, other: &Self) -> f64 {
        let tol = self.merge_tol.max(other.merge_tol);
        let mut all: Vec<(GroupElement, f64)> = self.atoms.clone();
        all.extend(other.atoms.iter().map(|(g, w)| (*g, -w)));
        0.5 * merge_atoms(all, tol).iter().map(|(_, w)| w.abs()).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::LieVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_measure(rng: &mut ChaCha8Rng, n: usize) -> FiniteSupportMeasure {
        let atoms: Vec<(GroupElement, f64)> = (0..n)
            .map(|_| {
                let g = LieVector::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)).exp();
                (g, rng.gen_range(0.1..1.0))
            })
            .collect();
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        FiniteSupportMeasure::new(atoms.into_iter().map(|(g, w)| (g, w / total)).collect(), DEFAULT_MERGE_TOL).unwrap()
    }

    // exhaustive triple products, no merging
    fn expand3(a: &FiniteSupportMeasure, b: &FiniteSupportMeasure, c: &FiniteSupportMeasure) -> Vec<(GroupElement, f64)> {
        let mut out = Vec::new();
        for (g, u) in a.atoms() {
            for (h, v) in b.atoms() {
                for (k, w) in c.atoms() {
                    out.push((g.mul_raw(h).mul_raw(k), u * v * w));
                }
            }
        }
        out
    }

    #[test]
    fn dirac_identity_is_neutral() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mu = random_measure(&mut rng, 4);
        let e = FiniteSupportMeasure::dirac(GroupElement::identity());
        assert!(e.convolve(&mu).unwrap().total_variation(&mu) < 1e-12);
        assert!(mu.convolve(&e).unwrap().total_variation(&mu) < 1e-12);
    }

    #[test]
    fn square_of_symmetric_pair() {
        let a = LieVector::new(0.3, 0.1, -0.2).exp();
        let mu = FiniteSupportMeasure::uniform(vec![a, a.inverse()]).unwrap();
        let sq = mu.convolve(&mu).unwrap();
        assert_eq!(sq.len(), 3);
        let weight_at = |g: GroupElement| sq.atoms().iter().find(|(h, _)| h.dist(&g) < 1e-9).map(|x| x.1);
        assert!((weight_at(GroupElement::identity()).unwrap() - 0.5).abs() < 1e-15);
        assert!((weight_at(a * a).unwrap() - 0.25).abs() < 1e-15);
        assert!((weight_at(a.inverse() * a.inverse()).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn associativity_against_exhaustive_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mu = random_measure(&mut rng, 3);
        let left = mu.convolve(&mu).unwrap().convolve(&mu).unwrap();
        let right = mu.convolve(&mu.convolve(&mu).unwrap()).unwrap();
        assert!(left.total_variation(&right) < 1e-9);
        let oracle = FiniteSupportMeasure::new(expand3(&mu, &mu, &mu), DEFAULT_MERGE_TOL).unwrap();
        assert!(left.total_variation(&oracle) < 1e-9);
    }

    #[test]
    fn mass_symmetry_and_inversion() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mu = random_measure(&mut rng, 3);
        let nu = random_measure(&mut rng, 3);
        let conv = mu.convolve(&nu).unwrap();
        assert!((conv.total_mass() - 1.0).abs() < 1e-12);
        let lhs = conv.inverse();
        let rhs = nu.inverse().convolve(&mu.inverse()).unwrap();
        assert!(lhs.total_variation(&rhs) < 1e-9);

        let a = LieVector::new(0.2, 0.4, -0.1).exp();
        let b = LieVector::new(-0.3, 0.0, 0.5).exp();
        let sym = FiniteSupportMeasure::uniform(vec![a, a.inverse(), b, b.inverse()]).unwrap();
        for n in 1..=4 {
            assert!(sym.power(n).unwrap().is_symmetric(), "n = {n}");
        }
        assert!(FiniteSupportMeasure::dirac(GroupElement::identity()).is_symmetric());
        assert!(!FiniteSupportMeasure::dirac(a).is_symmetric());
    }

    #[test]
    fn support_radius_examples() {
        assert_eq!(FiniteSupportMeasure::dirac(GroupElement::identity()).support_radius(), 0.0);
        let h = LieVector::new(1.0, 0.0, 0.0);
        let mu = FiniteSupportMeasure::uniform(vec![h.scaled(0.3).exp(), h.scaled(-0.3).exp()]).unwrap();
        // exp(0.3H) = a(0.6): t = 0.6, Q = asin(tanh 0.3)
        let expected = 0.6f64.hypot(0.3f64.tanh().asin());
        assert!((mu.support_radius() - expected).abs() < 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let m = random_measure(&mut rng, 3);
            let r2 = m.convolve(&m).unwrap().support_radius();
            assert!(r2 <= 2.0 * m.support_radius() + 1e-8);
        }
    }

    #[test]
    fn budget_and_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mu = random_measure(&mut rng, 4);
        assert!(matches!(mu.convolve_with_budget(&mu, 10), Err(Error::AtomBudgetExceeded { .. })));
        assert!(FiniteSupportMeasure::new(vec![(GroupElement::identity(), 0.5)], 1e-9).is_err());
        assert!(FiniteSupportMeasure::new(vec![(GroupElement::identity(), -1.0), (GroupElement::identity(), 2.0)], 1e-9).is_err());
    }
}

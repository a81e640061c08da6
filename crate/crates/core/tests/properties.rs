mod common;

use homwalk::group::LieVector;
use homwalk::lattice::{dist_x, dist_x_below, reduce, CosetIndex};
use homwalk::measures::{generator_presets, FiniteSupportMeasure};
use homwalk::{GroupElement, HeightParams, Seed, SpacePoint};
use proptest::prelude::*;

fn element(max: f64) -> impl Strategy<Value = GroupElement> {
    (-max..max, -max..max, -max..max).prop_map(|(a, b, c)| LieVector::new(a, b, c).exp())
}

fn point() -> impl Strategy<Value = SpacePoint> {
    element(1.5).prop_map(|g| reduce(&g))
}

fn unimodular_integer() -> impl Strategy<Value = [i64; 4]> {
    // products of the generators T^k and S
    prop::collection::vec((-3i64..=3, any::<bool>()), 0..6).prop_map(|w| {
        let mut m = [1i64, 0, 0, 1];
        for (k, s) in w {
            m = homwalk::lattice::int_mul(&m, &[1, k, 0, 1]);
            if s {
                m = homwalk::lattice::int_mul(&m, &[0, -1, 1, 0]);
            }
        }
        m
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metric_is_right_invariant_and_symmetric(g in element(1.5), h in element(1.5), k in element(1.5)) {
        let d = g.dist(&h);
        prop_assert!((d - h.dist(&g)).abs() < 1e-9);
        let (gk, hk) = (g.mul_raw(&k), h.mul_raw(&k));
        prop_assert!((d - gk.dist(&hk)).abs() < 1e-7 * (1.0 + d));
    }

    #[test]
    fn reduction_is_idempotent_and_lattice_invariant(g in element(2.0), lam in unimodular_integer()) {
        let p = reduce(&g);
        prop_assert!(p.satisfies_reduction(1e-9));
        let again = reduce(p.rep());
        prop_assert!(p.rep().max_entry_diff(again.rep()) < 1e-12);
        let moved = reduce(&g.mul_raw(&homwalk::lattice::int_to_group(&lam)));
        prop_assert!(dist_x(&p, &moved) < 1e-7);
    }

    #[test]
    fn quotient_distance_is_a_metric(p in point(), q in point(), r in point()) {
        let (pq, qr, pr) = (dist_x(&p, &q), dist_x(&q, &r), dist_x(&p, &r));
        prop_assert!((pq - dist_x(&q, &p)).abs() < 1e-9);
        prop_assert!(pr <= pq + qr + 1e-9);
        prop_assert!(dist_x(&p, &p) < 1e-12);
    }

    #[test]
    fn translation_moves_at_most_rho(p in point(), g in element(0.8)) {
        let moved = p.translate(&g);
        prop_assert!(dist_x(&moved, &p) <= g.displacement() + 1e-9);
    }

    #[test]
    fn thresholded_distance_agrees(p in point(), q in point(), r in 0.05f64..3.0) {
        let d = dist_x(&p, &q);
        match dist_x_below(&p, &q, r) {
            Some(e) => prop_assert!(e < r && (e - d).abs() < 1e-12),
            None => prop_assert!(d >= r - 1e-12),
        }
    }

    #[test]
    fn quotient_distance_matches_brute_force(p in point(), q in point()) {
        prop_assert_eq!(dist_x(&p, &q), common::brute_dist(&p, &q));
    }

    #[test]
    fn height_is_inverse_shortest_vector(g in element(2.0)) {
        let s = common::brute_shortest(&g, 50);
        let h = reduce(&g).height(&HeightParams::default());
        prop_assert!((h - s.recip().max(1.0)).abs() < 1e-9 * h);
    }

    #[test]
    fn index_queries_match_linear_scan(pts in prop::collection::vec(point(), 1..40), q in point(), r in 0.05f64..1.0) {
        let mut idx = CosetIndex::new(r);
        for p in &pts {
            idx.insert(*p);
        }
        let mut got: Vec<u32> = idx.within(&q, r);
        got.sort_unstable();
        let want: Vec<u32> = (0..pts.len() as u32).filter(|&i| dist_x(&pts[i as usize], &q) < r).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn convolution_preserves_mass(scale in 0.05f64..1.0, n in 1usize..4) {
        let mu = generator_presets("unipotents-rot35", scale).unwrap();
        let nu = mu.power(n).unwrap();
        prop_assert!((nu.total_mass() - 1.0).abs() < 1e-12);
        let pushed: f64 = nu.pushforward(&SpacePoint::identity_coset()).iter().map(|a| a.1).sum();
        prop_assert!((pushed - 1.0).abs() < 1e-12);
        prop_assert!(nu.total_variation(&nu.clone()) < 1e-15);
    }

    #[test]
    fn inverse_measure_reverses_convolution(scale in 0.05f64..1.0) {
        let mu = generator_presets("unipotents-rot35", scale).unwrap();
        let lhs = mu.convolve(&mu.inverse()).unwrap().inverse();
        let rhs = mu.convolve(&mu.inverse()).unwrap();
        prop_assert!(lhs.total_variation(&rhs) < 1e-9);
    }

    #[test]
    fn seeds_are_reproducible(key in any::<u64>(), tag in any::<u64>()) {
        use rand::Rng;
        let s = Seed::new(key as u128);
        let a: u64 = s.derive(tag).rng().gen();
        let b: u64 = Seed::new(key as u128).derive(tag).rng().gen();
        prop_assert_eq!(a, b);
        prop_assert_ne!(s.derive(tag), s.derive(tag.wrapping_add(1)));
    }
}

#[test]
fn dirac_measure_is_its_own_power() {
    let g = GroupElement::upper_unipotent(0.3);
    let mu = FiniteSupportMeasure::dirac(g);
    let p = mu.power(3).unwrap();
    assert_eq!(p.len(), 1);
    assert!(p.atoms()[0].0.max_entry_diff(&g.mul_raw(&g).mul_raw(&g)) < 1e-12);
}

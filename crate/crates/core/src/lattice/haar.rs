//! Haar sampling on X and on metric balls of G.
//!
//! Haar measure is `dx dy/y² dθ` in the coordinates of [`super::coordinates`],
//! with θ ∈ [0, π) on X (total mass π²/3) and θ ∈ [0, 2π) on G.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{element_with_coordinates, SpacePoint, Y_MIN};
use crate::group::GroupElement;
use crate::rng::Seed;

/// Haar volume of X in these coordinates.
pub const VOLUME_X: f64 = PI * PI / 3.0;

const CHUNK: usize = 4096;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HaarSample {
    pub points: Vec<SpacePoint>,
    pub y_max: f64,
    /// Haar probability of `{y > y_max}`, omitted by the sampler.
    pub truncation_deficit: f64,
}

/// Draws one point of the truncated fundamental domain.
pub fn haar_point<R: Rng>(rng: &mut R, y_max: f64) -> SpacePoint {
    let (inv_lo, inv_hi) = (1.0 / Y_MIN, 1.0 / y_max);
    loop {
        let u: f64 = rng.gen();
        // inverse CDF of dy/y² on [Y_MIN, y_max]
        let y = 1.0 / (inv_lo - u * (inv_lo - inv_hi));
        let x: f64 = rng.gen::<f64>() - 0.5;
        let theta = PI * rng.gen::<f64>();
        if x * x + y * y >= 1.0 {
            return SpacePoint::from_coordinates(x, y, theta);
        }
    }
}

/// `count` i.i.d. Haar points of X truncated at `y ≤ y_max`. Chunk `k` of 4096
/// points uses stream `k`, so the output does not depend on the thread count.
pub fn haar_sample(count: usize, y_max: f64, seed: Seed) -> HaarSample {
    let chunks = count.div_ceil(CHUNK);
    let points = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|k| {
            let mut rng = seed.with_stream(k as u64).rng();
            let n = CHUNK.min(count - k * CHUNK);
            (0..n).map(move |_| haar_point(&mut rng, y_max)).collect::<Vec<_>>()
        })
        .collect();
    HaarSample {
        points,
        y_max,
        truncation_deficit: 3.0 / (PI * y_max),
    }
}

/// θ half-width of the proposal box for `B_δ`.
fn theta_range(delta: f64) -> f64 {
    delta.min(PI)
}

fn proposal_volume(delta: f64) -> f64 {
    2.0 * PI * (delta.cosh() - 1.0) * 2.0 * theta_range(delta)
}

/// Uniform proposal on {d_H(z, i) < δ} × (−δ, δ); returns the element `u` with
/// `u⁻¹·i = z` and angle θ.
fn propose<R: Rng>(rng: &mut R, delta: f64) -> GroupElement {
    let cm1 = delta.cosh() - 1.0;
    let s = (1.0 + rng.gen::<f64>() * cm1).acosh();
    let phi = 2.0 * PI * rng.gen::<f64>();
    // k(φ/2) rotates the geodesic through i by φ
    let (x, y) = GroupElement::rotation(0.5 * phi).act_on_half_plane(0.0, s.exp());
    let theta = theta_range(delta) * (2.0 * rng.gen::<f64>() - 1.0);
    element_with_coordinates(x, y, theta)
}

/// Haar-uniform element of the metric ball `B_δ(I) ⊂ G`.
pub fn sample_ball<R: Rng>(rng: &mut R, delta: f64) -> GroupElement {
    loop {
        let u = propose(rng, delta);
        if u.displacement() < delta {
            return u;
        }
    }
}

/// Monte Carlo estimate of `m_G(B_δ)` and its standard error.
pub fn haar_ball_volume_with_error(delta: f64, samples: usize, seed: Seed) -> (f64, f64) {
    let chunks = samples.div_ceil(CHUNK);
    let hits: Vec<usize> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng: ChaCha8Rng = seed.with_stream(k as u64).rng();
            let n = CHUNK.min(samples - k * CHUNK);
            (0..n).filter(|_| propose(&mut rng, delta).displacement() < delta).count()
        })
        .collect();
    let hit: usize = hits.iter().sum();
    let p = hit as f64 / samples as f64;
    let box_vol = proposal_volume(delta);
    (box_vol * p, box_vol * (p * (1.0 - p) / samples as f64).sqrt())
}

pub const BALL_VOLUME_SAMPLES: usize = 1 << 19;

/// `m_G(B_δ)`, estimated once per δ with a fixed internal seed (relative error
/// well under 1%) and cached.
pub fn haar_ball_volume(delta: f64) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().unwrap().get(&delta.to_bits()) {
        return *v;
    }
    let seed = Seed::new(0x6ba1_1f00).derive(delta.to_bits());
    let (v, _) = haar_ball_volume_with_error(delta, BALL_VOLUME_SAMPLES, seed);
    cache.lock().unwrap().insert(delta.to_bits(), v);
    v
}

//! Named symmetric generating measures with rational entries.

use super::FiniteSupportMeasure;
use crate::error::{Error, Result};
use crate::group::GroupElement;

pub const PRESET_NAMES: &[&str] = &["unipotents-rot35", "rot35-unipotent-scaled"];

/// The rotation with `tan(φ/2) = 1/m`: entries `((m²−1)/(m²+1), −2m/(m²+1); 2m/(m²+1), (m²−1)/(m²+1))`.
/// For `m ≥ 2` the cosine is rational and not in {0, ±½, ±1}, so the rotation has infinite order.
pub fn pythagorean_rotation(m: u32) -> GroupElement {
    let m = m as f64;
    let den = m * m + 1.0;
    let (c, s) = ((m * m - 1.0) / den, 2.0 * m / den);
    GroupElement::from_entries_unchecked([c, -s, s, c])
}

/// Uniform measure on `{E12(±s), E21(±s), R(±φ)}`.
fn unipotents_and_rotation(s: f64, rot: GroupElement) -> Result<FiniteSupportMeasure> {
    FiniteSupportMeasure::uniform(vec![
        GroupElement::upper_unipotent(s),
        GroupElement::upper_unipotent(-s),
        GroupElement::lower_unipotent(s),
        GroupElement::lower_unipotent(-s),
        rot,
        rot.inverse(),
    ])
}

/// Smallest `(k, m)` with `E12(±1/k)`, `E21(±1/k)` and the Pythagorean rotation
/// of parameter `m` all inside `B_ε`.
pub fn scaled_parameters(eps: f64) -> Result<(u32, u32)> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("scale ε must lie in (0, 1), got {eps}")));
    }
    let k = (1..=1_000_000u32)
        .find(|&k| GroupElement::upper_unipotent(1.0 / k as f64).displacement() <= eps)
        .ok_or_else(|| Error::InvalidArgument(format!("ε = {eps} too small")))?;
    let m = (2..=1_000_000u32)
        .find(|&m| pythagorean_rotation(m).displacement() <= eps)
        .ok_or_else(|| Error::InvalidArgument(format!("ε = {eps} too small")))?;
    Ok((k, m))
}

/// Builds a named preset.
///
/// * `unipotents-rot35`: `{E12(±s), E21(±s), R(±φ)}` with `cos φ = 3/5`, `s = scale` (default 1).
/// * `rot35-unipotent-scaled`: the same shape shrunk into `B_ε` with `ε = scale`:
///   unipotent parameter `1/k` and Pythagorean rotation `tan(φ/2) = 1/m`.
pub fn generator_presets(name: &str, scale: f64) -> Result<FiniteSupportMeasure> {
    match name {
        "unipotents-rot35" => unipotents_and_rotation(scale, pythagorean_rotation(2)),
        "rot35-unipotent-scaled" => {
            let (k, m) = scaled_parameters(scale)?;
            unipotents_and_rotation(1.0 / k as f64, pythagorean_rotation(m))
        }
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

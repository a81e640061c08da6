//! Random walks on the space of unimodular planar lattices `SL₂(ℝ)/SL₂(ℤ)`.

pub mod error;
pub mod experiments;
pub mod group;
pub mod io;
pub mod lattice;
pub mod measures;
pub mod rng;
pub mod walk;

pub use error::{Error, Result};
pub use group::{CartanTriple, GroupElement, LieVector};
pub use lattice::{HeightParams, SpacePoint};
pub use rng::Seed;

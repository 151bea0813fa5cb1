//! Generative modeling of 3D shapes with internal structure.
//!
//! The pipeline has two learned stages. A vector-quantized implicit
//! autoencoder ([`vqudf`]) turns a voxelized point cloud into a grid of
//! discrete codebook tokens and decodes unsigned distance fields from it.
//! A decoder-only transformer ([`transformer`]) models the token sequences
//! and samples new ones. Decoded fields are turned back into dense point
//! clouds by [`extraction`] and scored with [`metrics`].
//!
//! [`geometry`] holds everything that touches ground-truth shapes: mesh and
//! point cloud I/O, normalization, surface sampling, voxelization, exact
//! unsigned distances and the interior-structure curation filter.

pub mod archive;
pub mod error;
pub mod extraction;
pub mod geometry;
pub mod metrics;
pub mod nn;
pub mod transformer;
pub mod vqudf;

pub use error::{Error, Result};
pub use geometry::Vec3;

/// Seeded generator used everywhere randomness is needed.
pub type SeededRng = rand_chacha::ChaCha8Rng;

/// Builds the crate's deterministic generator from a seed.
pub fn seeded_rng(seed: u64) -> SeededRng {
    use rand::SeedableRng;
    SeededRng::seed_from_u64(seed)
}

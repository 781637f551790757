//! Opacity theory checks and unbiased surface extraction for mixed
//! signed/unsigned distance fields.
//!
//! The crate has two halves. [`render`] evaluates the NeuS density,
//! transmittance and weight along a single ray-plane intersection and checks
//! the closed-form opacity and weight-maximum locations against quadrature.
//! [`envelope`] and [`projection`] extract the unbiased surface of a mixed
//! field: marching cubes on the absolute field at a small iso-value produces
//! an envelope, which a two-stage optimization then projects onto the local
//! minima of the absolute field. [`metrics`] compares meshes with one-way
//! Chamfer distances and completeness curves, and [`io`] holds the file
//! formats.

pub mod envelope;
pub mod error;
pub mod field;
pub mod geom;
pub mod io;
mod kdtree;
mod mc_tables;
pub mod mesh;
pub mod metrics;
pub mod optim;
pub mod projection;
pub mod render;
pub mod scene_spec;

pub use error::{Error, Result};
pub use geom::{Aabb, Vec3};
pub use mesh::TriangleMesh;

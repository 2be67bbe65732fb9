//! Field transfer between non-matching simplicial meshes.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: points and axis-aligned boxes shared by everything else.
//! - [`meshio`]: simplicial meshes of dimension 1, 2 and 3 (including surfaces
//!   embedded in 3D), structured generators, boundary extraction and a legacy
//!   ASCII VTK reader/writer.
//! - [`locator`]: STR-packed R-tree, nearest-neighbour queries, boundary
//!   locators and partitioned multi-point lookup.
//! - [`geodesic`]: edge-graph geodesic distances and shortest paths.
//! - [`sparse`]: CSR matrices and a Jacobi-preconditioned conjugate gradient.
//! - [`transfer`]: (rescaled, optionally geodesic) RBF interpolation and the
//!   closest-point / linear remap modes.
//! - [`interface`]: vertex maps across shared interfaces, including
//!   surface-to-volume coupling.
//! - [`fem`]: P1 Laplace and Laplace-Beltrami solver.
//! - [`restart`]: checkpoint registry and the `.lxrs` container.
//! - [`prm`]: parser for `subsection`/`set`/`end` parameter files.

pub mod fem;
pub mod geodesic;
pub mod geometry;
pub mod interface;
pub mod locator;
pub mod meshio;
pub mod prm;
pub mod restart;
pub mod sparse;
pub mod transfer;

pub use geometry::{Aabb, Point};
pub use meshio::{Field, Mesh, Tag};

//! Level lines of quasiperiodic functions on planes.
//!
//! A quasiperiodic function here is the restriction of an `N`-periodic
//! function `F` (a finite Fourier series over a Bravais lattice) to an
//! affinely embedded plane. For `N = 3` this is the semiclassical picture of
//! electron orbits in a magnetic field `B`: orbits are intersections of the
//! Fermi surface with planes orthogonal to `B`.
//!
//! The crate traces level lines, classifies them (closed, periodic,
//! topologically regular with an integer label, chaotic candidate), finds
//! the energy interval carrying open trajectories, and sweeps the direction
//! sphere to build stability-zone diagrams.

pub mod classifier;
pub mod dispersion;
pub mod error;
pub mod geometry;
pub mod homology;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod multiquasi;
pub mod par;
pub mod scanner;
pub mod section;
pub mod tracer;

pub use error::{Error, Result};

//! Monte Carlo laboratory for the exponential trace and mass of planar
//! Anderson Hamiltonians `H = -Δ/2 + κξ` with Dirichlet boundary conditions.
//!
//! The white noise is never sampled: its Gaussian average is taken
//! analytically, which turns the Feynman-Kac formulas into path integrals of
//! renormalized self- and mutual-intersection local times of Brownian bridges
//! and motions. The crate is organized bottom-up:
//!
//! * [`geometry`]: planar domains, distances, uniform sampling, boundary tubes.
//! * [`paths`]: Brownian motion / bridge discretizations and Dirichlet survival.
//! * [`local_times`]: approximate SILT/MILT and their exact means.
//! * [`spectral`]: exact `κ = 0` eigen-sums for rectangles and disks.
//! * [`feynman_kac`]: Monte Carlo moment estimators.
//! * [`recovery`]: geometric and statistical recovery from trace/mass series.
//! * [`experiment`]: config-driven batch runner behind the `anderson-lab` CLI.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod feynman_kac;
pub mod geometry;
pub mod local_times;
pub mod paths;
pub mod quadrature;
pub mod recovery;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use error::{LabError, Result};
pub use geometry::{BoundaryNeighborhood, PlanarDomain, Point2};
pub use rng::RandomStream;

//! Reservoir-induced mode coupling, biorthogonal quasi modes and the
//! Petermann excess-noise factor for linearly amplified and damped
//! multimode fields.
//!
//! The pipeline runs bottom-up:
//!
//! * [`mode_basis`]: sine modes of a lossless one-dimensional universe.
//! * [`reservoir`]: piecewise-constant gain/loss densities and the coupling
//!   matrices `L`, `Γ` they induce.
//! * [`quasimodes`]: the complex symmetric drift generator, its biorthogonal
//!   eigenvectors, rates and K-factors.
//! * [`moments`]: exact first and second moment dynamics.
//! * [`langevin`]: Monte-Carlo Langevin ensembles, Green-function field
//!   propagation and accumulated-noise formulas.
//! * [`paraxial`]: split-step propagation of a transverse envelope and
//!   transverse quasi modes.

pub mod eigen;
pub mod langevin;
pub mod mode_basis;
pub mod moments;
pub mod paraxial;
pub mod quadrature;
pub mod quasimodes;
pub mod reservoir;

pub use mode_basis::{inner_product, ModeBasis, SpatialGrid, C64};
pub use quasimodes::{solve_quasimodes, DriftMatrix, QuasiMode, QuasiModeSet};
pub use reservoir::{coupling_matrix, CouplingMatrices, RateProfile, ReservoirKind, Segment};

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

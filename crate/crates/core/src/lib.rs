//! Nonlinear potential toolkit.
//!
//! Evaluates truncated Riesz, Wolff, Havin-Maz'ja and caloric potentials of
//! Radon measures (atoms plus gridded densities), solves degenerate elliptic
//! and quasilinear parabolic model problems with measure data on uniform
//! grids, and measures both sides of the associated pointwise estimates to
//! extract empirical constants and their stability under refinement.
//!
//! Module map:
//! - [`measure`]: Radon measures and ball/cylinder mass queries.
//! - [`potential`]: log-scale quadrature of all truncated potentials.
//! - [`field`]: grid fields, gradients, integral averages and norms.
//! - [`elliptic`]: structured vector fields and the Dirichlet solver.
//! - [`parabolic`]: implicit-Euler solver for p = 2 quasilinear equations.
//! - [`fractional`]: Gagliardo seminorms, Caccioppoli checks, level-set
//!   iteration diagnostics.
//! - [`verify`]: estimate verification reports, mapping and refinement
//!   studies.
//! - [`preset`]: canonical experiment configurations used by the CLI.

pub mod elliptic;
pub mod error;
pub mod field;
pub mod fractional;
pub mod grid;
pub mod measure;
pub mod parabolic;
pub mod potential;
pub mod preset;
pub mod report;
pub mod sparse;
pub mod util;
pub mod verify;

pub use error::{Error, Result};
pub use field::{ScalarField, VectorField};
pub use grid::Grid;
pub use measure::{BackwardCylinder, MassMode, RadonMeasure};
pub use potential::{PotentialKind, QuadratureSpec};

//! Minimal-norm approximate solutions of ill-posed parametric linear
//! systems, with an offline/online reduced-basis layer.
//!
//! The crate is organized around three layers:
//!
//! - [`space`] / [`operator`]: finite-dimensional Hilbert spaces given by
//!   Gram matrices, bounded operators between them, Gram-based adjoints
//!   and the composition `Lambda = L L*`.
//! - [`minnorm`] / [`tikhonov`]: the constrained minimal-norm problem
//!   `min ||u||_X s.t. ||L u - f||_Y <= eps` solved through its dual, and
//!   the linear two-parameter regularization `(Lambda + eta) w = f` with
//!   its residual estimator.
//! - [`greedy`] / [`elliptic`]: offline training of a reduced basis over
//!   parameter x regularization space, online reconstruction by
//!   projection, and a 1D variable-coefficient elliptic test family on
//!   discrete H^2 / H^-1 spaces.
//!
//! [`config`] and [`archive`] provide the file formats used by the CLI.

pub mod archive;
pub mod config;
pub mod elliptic;
pub mod error;
pub mod family;
pub mod greedy;
pub mod linalg;
pub mod minnorm;
pub mod operator;
pub mod space;
pub mod tikhonov;

pub use error::{Error, Result};
pub use family::{Assembled, CustomFamily, NuBox, ProblemFamily};
pub use minnorm::{solve_dual_diagonal, hessian_min_eig, EpsProblem, EpsSolution};
pub use operator::{GramOperator, Operator};
pub use space::Space;
pub use tikhonov::{estimate_eta_interval, EtaInterval, TychProblem};

//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric (max asymmetry {max_asym:.3e} exceeds tolerance)")]
    NonSymmetric { max_asym: f64 },

    #[error("matrix is not positive definite (symmetric factorization failed)")]
    NotPositiveDefinite,

    #[error("Gram matrix is singular or too ill-conditioned to factor")]
    SingularGram,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no sign change found within the bracket expansion budget (psi({lo:.3e}) = {flo:.3e}, psi({hi:.3e}) = {fhi:.3e})")]
    BracketFailure { lo: f64, hi: f64, flo: f64, fhi: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),

    #[error("iteration budget of {0} exhausted before convergence")]
    MaxIterations(usize),

    #[error("basis vectors are linearly dependent in the Y inner product")]
    DependentBasis,

    #[error("zero vector where a nonzero vector is required")]
    ZeroVector,

    #[error("family infeasible: ||f_nu|| = {f_norm:.6e} <= eps = {eps:.6e} at a sampled parameter")]
    InfeasibleFamily { f_norm: f64, eps: f64 },

    #[error("training grid is empty")]
    EmptyGrid,

    #[error("greedy stagnated: new snapshot is numerically dependent while max surrogate {max_surrogate:.3e} > delta {delta:.3e}")]
    StagnationWithoutConvergence {
        max_surrogate: f64,
        delta: f64,
        /// Basis built so far; callers may persist it with a warning flag.
        partial: Box<crate::greedy::ReducedBasis>,
    },

    #[error("reduced basis is empty")]
    EmptyBasis,

    #[error("coefficient {value:.6e} at x = {x:.6} is below the declared lower bound {alpha:.6e}")]
    CoercivityViolation { x: f64, value: f64, alpha: f64 },

    #[error("parameter {0:?} lies outside the parameter box")]
    OutOfBox(Vec<f64>),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("archive error: {0}")]
    Archive(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

//! Finite-dimensional inner-product spaces defined by Gram matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative symmetry tolerance accepted at construction.
const SYMMETRY_RTOL: f64 = 1e-12;

/// A real inner-product space of dimension `dim` with `<u, v> = u^T G v`.
///
/// The Gram matrix is validated (symmetric, positive definite) and its
/// Cholesky factorization is cached at construction; norm, inner-product
/// and `G^{-1}` queries reuse the cached factor.
#[derive(Clone)]
pub struct Space {
    gram: DMatrix<f64>,
    chol: nalgebra::linalg::Cholesky<f64, nalgebra::Dyn>,
    chol_l: DMatrix<f64>,
    dim: usize,
}

impl std::fmt::Debug for Space {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Space").field("dim", &self.dim).finish()
    }
}

impl Space {
    /// Validates the Gram matrix and caches its factorization.
    pub fn new(gram: DMatrix<f64>) -> Result<Self> {
        let dim = gram.nrows();
        if gram.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: gram.ncols() });
        }
        if gram.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidProblem("Gram matrix has non-finite entries".into()));
        }
        let defect = linalg::symmetry_defect(&gram);
        if defect > SYMMETRY_RTOL {
            return Err(Error::NonSymmetric { max_asym: defect });
        }
        let sym = (&gram + gram.transpose()) * 0.5;
        let chol = nalgebra::linalg::Cholesky::new(sym.clone()).ok_or(Error::NotPositiveDefinite)?;
        let chol_l = chol.l();
        Ok(Self { gram: sym, chol, chol_l, dim })
    }

    /// Standard Euclidean space (identity Gram).
    pub fn euclidean(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim)).expect("identity Gram is SPD")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Lower Cholesky factor of the Gram matrix.
    pub fn cholesky_l(&self) -> &DMatrix<f64> {
        &self.chol_l
    }

    fn check_dim(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        Ok(())
    }

    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        self.check_dim(u)?;
        self.check_dim(v)?;
        Ok(u.dot(&(&self.gram * v)))
    }

    pub fn norm(&self, v: &DVector<f64>) -> Result<f64> {
        Ok(self.inner(v, v)?.max(0.0).sqrt())
    }

    /// Applies the Gram matrix, `v -> G v`.
    pub fn apply_gram(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(v)?;
        Ok(&self.gram * v)
    }

    /// Solves `G x = b` with the cached factorization plus refinement.
    pub fn solve_gram(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(b)?;
        let mut x = self.chol.solve(b);
        let bnorm = b.norm().max(f64::MIN_POSITIVE);
        for _ in 0..2 {
            let r = b - &self.gram * &x;
            if r.norm() <= 1e-15 * bnorm {
                break;
            }
            x += self.chol.solve(&r);
        }
        Ok(x)
    }

    /// Orthonormalizes `w` against the already-orthonormal `basis` by
    /// modified Gram-Schmidt with one reorthogonalization pass. Returns
    /// `None` when the remainder falls below `threshold` times the
    /// original norm.
    pub fn orthonormalize_against(
        &self,
        basis: &[DVector<f64>],
        w: &DVector<f64>,
        threshold: f64,
    ) -> Result<Option<DVector<f64>>> {
        self.check_dim(w)?;
        let norm0 = self.norm(w)?;
        if norm0 == 0.0 {
            return Ok(None);
        }
        let mut r = w.clone();
        for _ in 0..2 {
            for q in basis {
                let c = self.inner(&r, q)?;
                r -= c * q;
            }
        }
        let norm_r = self.norm(&r)?;
        if norm_r <= threshold * norm0 {
            return Ok(None);
        }
        Ok(Some(r / norm_r))
    }
}

//! Bounded operators between Gram-matrix spaces, their adjoints, and the
//! composition `Lambda = L L*` acting on the codomain.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::space::Space;

/// A linear operator `L : X -> Y` stored as a dense matrix together with
/// handles to its domain and codomain spaces.
#[derive(Clone)]
pub struct Operator {
    matrix: DMatrix<f64>,
    domain: Arc<Space>,
    codomain: Arc<Space>,
}

impl std::fmt::Debug for Operator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Operator")
            .field("dim_x", &self.domain.dim())
            .field("dim_y", &self.codomain.dim())
            .finish()
    }
}

impl Operator {
    pub fn new(matrix: DMatrix<f64>, domain: Arc<Space>, codomain: Arc<Space>) -> Result<Self> {
        if matrix.ncols() != domain.dim() {
            return Err(Error::DimensionMismatch { expected: domain.dim(), got: matrix.ncols() });
        }
        if matrix.nrows() != codomain.dim() {
            return Err(Error::DimensionMismatch { expected: codomain.dim(), got: matrix.nrows() });
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidProblem("operator matrix has non-finite entries".into()));
        }
        Ok(Self { matrix, domain, codomain })
    }

    /// Operator on Euclidean spaces of matching dimensions.
    pub fn euclidean(matrix: DMatrix<f64>) -> Result<Self> {
        let x = Arc::new(Space::euclidean(matrix.ncols()));
        let y = Arc::new(Space::euclidean(matrix.nrows()));
        Self::new(matrix, x, y)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn domain(&self) -> &Arc<Space> {
        &self.domain
    }

    pub fn codomain(&self) -> &Arc<Space> {
        &self.codomain
    }

    pub fn apply(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.domain.dim() {
            return Err(Error::DimensionMismatch { expected: self.domain.dim(), got: u.len() });
        }
        Ok(&self.matrix * u)
    }

    /// Applies the adjoint without materializing its matrix:
    /// `L* v = G_X^{-1} M^T G_Y v`.
    pub fn apply_adjoint(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let gy_v = self.codomain.apply_gram(v)?;
        self.domain.solve_gram(&(self.matrix.transpose() * gy_v))
    }

    /// The adjoint operator `L* : Y -> X` with matrix `G_X^{-1} M^T G_Y`.
    pub fn adjoint(&self) -> Result<Operator> {
        let mt_gy = self.matrix.transpose() * self.codomain.gram();
        let n = self.domain.dim();
        let m = self.codomain.dim();
        let mut adj = DMatrix::zeros(n, m);
        for j in 0..m {
            let col = self.domain.solve_gram(&mt_gy.column(j).clone_owned())?;
            adj.set_column(j, &col);
        }
        Operator::new(adj, Arc::clone(&self.codomain), Arc::clone(&self.domain))
    }

    /// One application of `Lambda = L L*`.
    pub fn gram_apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let u = self.apply_adjoint(v)?;
        self.apply(&u)
    }
}

/// The composition `Lambda = L L*` with its matrix assembled once.
///
/// `Lambda` is self-adjoint and positive semidefinite in the codomain inner
/// product; `sym() = G_Y * Lambda` is the plain-symmetric form used by the
/// SPD solvers.
#[derive(Clone)]
pub struct GramOperator {
    op: Operator,
    lambda: DMatrix<f64>,
    sym: DMatrix<f64>,
}

impl GramOperator {
    pub fn new(op: Operator) -> Result<Self> {
        let adj = op.adjoint()?;
        let lambda = op.matrix() * adj.matrix();
        let sym_raw = op.codomain().gram() * &lambda;
        let sym = (&sym_raw + sym_raw.transpose()) * 0.5;
        Ok(Self { op, lambda, sym })
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    pub fn space_y(&self) -> &Arc<Space> {
        self.op.codomain()
    }

    pub fn space_x(&self) -> &Arc<Space> {
        self.op.domain()
    }

    /// Plain matrix of `Lambda` acting on codomain coordinate vectors.
    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    /// Symmetric form `G_Y * Lambda`, positive semidefinite.
    pub fn sym(&self) -> &DMatrix<f64> {
        &self.sym
    }

    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.op.codomain().dim();
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: v.len() });
        }
        Ok(&self.lambda * v)
    }

    /// Gershgorin upper bound for the operator norm of `Lambda` on Y.
    ///
    /// The eigenvalues of the plain matrix coincide with the operator
    /// eigenvalues, so row sums bound them.
    pub fn norm_upper(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.lambda.nrows() {
            let mut row = 0.0;
            for j in 0..self.lambda.ncols() {
                row += self.lambda[(i, j)].abs();
            }
            worst = worst.max(row);
        }
        worst
    }

    /// Exact operator norm of `Lambda` on Y (largest eigenvalue of the
    /// pencil `sym x = mu G_Y x`).
    pub fn norm_exact(&self) -> Result<f64> {
        let (vals, _) = crate::linalg::pencil_eigen(&self.sym, self.op.codomain().cholesky_l())?;
        Ok(*vals.last().expect("nonempty spectrum"))
    }
}

impl std::fmt::Debug for GramOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GramOperator").field("dim_y", &self.lambda.nrows()).finish()
    }
}

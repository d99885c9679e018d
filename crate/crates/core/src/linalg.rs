//! Dense and banded linear-algebra kernels used by the solver modules.
//!
//! Everything here works on plain symmetric matrices; the operator modules
//! are responsible for translating Y-inner-product problems into this form.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Above this dimension SPD systems are solved by preconditioned conjugate
/// gradients instead of a dense Cholesky factorization.
pub const DIRECT_SOLVE_MAX_DIM: usize = 512;

/// Relative residual target for iterative SPD solves.
pub const CG_RTOL: f64 = 1e-12;

/// Checks symmetry to a relative tolerance and returns the max asymmetry.
pub fn symmetry_defect(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Solves `s * x = b` for symmetric positive definite `s`.
///
/// Dense Cholesky with iterative refinement up to `DIRECT_SOLVE_MAX_DIM`,
/// Jacobi-preconditioned CG beyond that.
pub fn solve_spd(s: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = s.nrows();
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.len() });
    }
    if n <= DIRECT_SOLVE_MAX_DIM {
        let chol = nalgebra::linalg::Cholesky::new(s.clone())
            .ok_or_else(|| Error::LinearSolveFailure("Cholesky factorization failed".into()))?;
        let mut x = chol.solve(b);
        refine(s, b, &mut x, |r| chol.solve(r));
        Ok(x)
    } else {
        conjugate_gradient(s, b, CG_RTOL, 20 * n)
    }
}

/// A couple of refinement sweeps; exits early once the residual settles.
fn refine<F>(s: &DMatrix<f64>, b: &DVector<f64>, x: &mut DVector<f64>, solve: F)
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let bnorm = b.norm().max(f64::MIN_POSITIVE);
    for _ in 0..2 {
        let r = b - s * &*x;
        if r.norm() <= 1e-15 * bnorm {
            break;
        }
        *x += solve(&r);
    }
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive definite systems.
pub fn conjugate_gradient(
    s: &DMatrix<f64>,
    b: &DVector<f64>,
    rtol: f64,
    max_iter: usize,
) -> Result<DVector<f64>> {
    let n = s.nrows();
    let inv_diag: DVector<f64> = DVector::from_fn(n, |i, _| {
        let d = s[(i, i)];
        if d > 0.0 {
            1.0 / d
        } else {
            1.0
        }
    });
    let bnorm = b.norm();
    if bnorm == 0.0 {
        return Ok(DVector::zeros(n));
    }
    let mut x = DVector::zeros(n);
    let mut r = b.clone();
    let mut z = r.component_mul(&inv_diag);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for _ in 0..max_iter {
        if r.norm() <= rtol * bnorm {
            return Ok(x);
        }
        let sp = s * &p;
        let psp = p.dot(&sp);
        if !(psp > 0.0) {
            return Err(Error::LinearSolveFailure(
                "CG encountered a non-positive curvature direction".into(),
            ));
        }
        let alpha = rz / psp;
        x += alpha * &p;
        r -= alpha * &sp;
        z = r.component_mul(&inv_diag);
        let rz_new = r.dot(&z);
        p = &z + (rz_new / rz) * &p;
        rz = rz_new;
    }
    if r.norm() <= rtol * bnorm {
        Ok(x)
    } else {
        Err(Error::MaxIterations(max_iter))
    }
}

/// Eigenvalues (ascending) and eigenvectors (matching columns) of a symmetric matrix.
pub fn sym_eigen(s: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = nalgebra::linalg::SymmetricEigen::new(s.clone());
    let n = s.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Generalized symmetric eigenproblem `B x = mu G x` with `G` SPD given by
/// its lower Cholesky factor `l`. Returns eigenvalues ascending and the
/// G-orthonormal eigenvectors as columns.
pub fn pencil_eigen(
    b: &DMatrix<f64>,
    l: &DMatrix<f64>,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    // C = L^{-1} B L^{-T}, symmetric; eigenvectors transform by L^{-T}.
    let linv_b = l
        .solve_lower_triangular(b)
        .ok_or_else(|| Error::LinearSolveFailure("singular Cholesky factor".into()))?;
    let c_t = l
        .solve_lower_triangular(&linv_b.transpose())
        .ok_or_else(|| Error::LinearSolveFailure("singular Cholesky factor".into()))?;
    let mut c = c_t.transpose();
    let sym = (&c + c.transpose()) * 0.5;
    c = sym;
    let (values, q) = sym_eigen(&c);
    let vectors = l
        .transpose()
        .solve_upper_triangular(&q)
        .ok_or_else(|| Error::LinearSolveFailure("singular Cholesky factor".into()))?;
    Ok((values, vectors))
}

/// Symmetric tridiagonal matrix stored by bands; the banded fast path used
/// by the elliptic assembly.
#[derive(Debug, Clone)]
pub struct Tridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len());
        Self { diag, off }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n();
        let mut y = DVector::zeros(n);
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                v += self.off[i] * x[i + 1];
            }
            y[i] = v;
        }
        y
    }

    /// Thomas algorithm. Valid for the diagonally dominant SPD matrices
    /// assembled here; no pivoting.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n();
        if b.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: b.len() });
        }
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut denom = self.diag[0];
        if denom == 0.0 {
            return Err(Error::LinearSolveFailure("zero pivot in tridiagonal solve".into()));
        }
        if n > 1 {
            c[0] = self.off[0] / denom;
        }
        d[0] = b[0] / denom;
        for i in 1..n {
            denom = self.diag[i] - self.off[i - 1] * c[i - 1];
            if denom == 0.0 {
                return Err(Error::LinearSolveFailure("zero pivot in tridiagonal solve".into()));
            }
            if i + 1 < n {
                c[i] = self.off[i] / denom;
            }
            d[i] = (b[i] - self.off[i - 1] * d[i - 1]) / denom;
        }
        let mut x = DVector::zeros(n);
        x[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = d[i] - c[i] * x[i + 1];
        }
        Ok(x)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if j + 1 == i {
                self.off[j]
            } else if i + 1 == j {
                self.off[i]
            } else {
                0.0
            }
        })
    }

    /// Dense inverse via columnwise Thomas solves.
    pub fn inverse_dense(&self) -> Result<DMatrix<f64>> {
        let n = self.n();
        let mut inv = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            let col = self.solve(&e)?;
            inv.set_column(j, &col);
        }
        // Symmetrize away the last-bit asymmetry of columnwise solves.
        let sym = (&inv + inv.transpose()) * 0.5;
        Ok(sym)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_tridiag(n: usize) -> Tridiag {
        Tridiag::new(vec![2.0; n], vec![-1.0; n - 1])
    }

    #[test]
    fn thomas_matches_dense_solve() {
        let t = laplace_tridiag(12);
        let b = DVector::from_fn(12, |i, _| (i as f64 * 0.37).sin());
        let x = t.solve(&b).unwrap();
        let dense = t.to_dense();
        let x_ref = dense.clone().lu().solve(&b).unwrap();
        assert!((&x - &x_ref).norm() < 1e-12 * x_ref.norm());
        assert!((t.matvec(&x) - &b).norm() < 1e-12 * b.norm());
    }

    #[test]
    fn cg_agrees_with_cholesky() {
        let n = 40;
        let a = DMatrix::from_fn(n, n, |i, j| if i == j { 3.0 + i as f64 } else { -0.8 / (1.0 + (i as f64 - j as f64).abs()) });
        let s = (&a + a.transpose()) * 0.5;
        let b = DVector::from_fn(n, |i, _| (i as f64).cos());
        let x_direct = solve_spd(&s, &b).unwrap();
        let x_cg = conjugate_gradient(&s, &b, 1e-13, 4000).unwrap();
        assert!((&x_direct - &x_cg).norm() < 1e-9 * x_direct.norm());
    }

    #[test]
    fn pencil_eigen_recovers_rayleigh_extremes() {
        let n = 6;
        let g = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 } else if (i as i64 - j as i64).abs() == 1 { 0.3 } else { 0.0 });
        let b = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 + i as f64 } else { 0.1 });
        let b = (&b + b.transpose()) * 0.5;
        let l = nalgebra::linalg::Cholesky::new(g.clone()).unwrap().l();
        let (vals, vecs) = pencil_eigen(&b, &l).unwrap();
        for k in 0..n {
            let v = vecs.column(k).clone_owned();
            let lhs = &b * &v;
            let rhs = &g * &v * vals[k];
            assert!((lhs - rhs).norm() < 1e-9, "pencil residual too large at k={k}");
        }
        assert!(vals.windows(2).all(|w| w[0] <= w[1] + 1e-12));
    }
}

//! Minimal-norm approximate solutions of `L u = f`.
//!
//! For a target that is not exactly reachable, the problem
//! `min ||u||_X  subject to  ||L u - f||_Y <= eps` is solved through its
//! dual: minimize `J(v) = 1/2 ||L* v||_X^2 + eps ||v||_Y - <f, v>_Y` over
//! the codomain. The nonzero minimizer satisfies
//! `Lambda v + eps * v / ||v||_Y = f`, which reduces to a scalar root-find
//! for `eta = eps / ||v||_Y`: with `w(eta) = (Lambda + eta I)^{-1} f`, the
//! function `psi(eta) = eta ||w(eta)||_Y - eps` is strictly increasing and
//! its root recovers `v = w(eta*)`, `u = L* v`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::operator::{GramOperator, Operator};

/// Relative tolerance on `psi` at the accepted root, in units of `eps`.
pub const ROOT_FTOL_REL: f64 = 1e-10;

/// Relative bracket width at which the root-find stops regardless of `psi`.
pub const ROOT_WIDTH_REL: f64 = 1e-12;

const BRACKET_EXPANSION: f64 = 10.0;
const BRACKET_BUDGET: usize = 60;
const ROOT_MAX_ITER: usize = 200;

/// One constrained minimal-norm instance: operator, target and tolerance.
pub struct EpsProblem {
    gram_op: GramOperator,
    target: DVector<f64>,
    eps: f64,
    target_norm: f64,
    gy_target: DVector<f64>,
}

/// Solution of the dual problem together with the primal reconstruction.
#[derive(Debug, Clone)]
pub struct EpsSolution {
    /// Dual minimizer in Y.
    pub v_tilde: DVector<f64>,
    /// Primal solution `u = L* v`.
    pub u_tilde: DVector<f64>,
    /// `||v_tilde||_Y`.
    pub s: f64,
    /// Scalar multiplier at the root: `eps / s` for `solve_dual`
    /// (infinite in the zero case), the orthogonal-block multiplier for
    /// `solve_finite_dim`.
    pub eta_star: f64,
    /// Achieved `||L u - f||_Y`, recomputed from the assembled solution.
    pub misfit: f64,
    /// Number of scalar-function evaluations spent by the root-find.
    pub iterations: usize,
    pub converged: bool,
    /// Estimated spectral condition number of `Lambda + eta I` at the root.
    pub cond_estimate: f64,
}

struct ScalarRoot<T> {
    value: f64,
    payload: T,
    evaluations: usize,
}

struct Bracket<T> {
    lo: f64,
    flo: f64,
    plo: T,
    hi: f64,
    fhi: f64,
    phi: T,
}

/// Bracket by geometric expansion from `t0`, then safeguarded
/// secant/bisection (Illinois variant). `psi` must be increasing through
/// its root; returns the evaluation point with the smallest `|psi|`.
fn bracketed_root<T, F>(mut psi: F, t0: f64, ftol: f64) -> Result<ScalarRoot<T>>
where
    F: FnMut(f64) -> Result<(f64, T)>,
{
    let mut evaluations = 0usize;
    let mut eval = |t: f64, n: &mut usize| -> Result<(f64, T)> {
        *n += 1;
        psi(t)
    };

    let t0 = if t0.is_finite() && t0 > 0.0 { t0 } else { 1.0 };
    let (f0, p0) = eval(t0, &mut evaluations)?;
    if f0.abs() <= ftol {
        return Ok(ScalarRoot { value: t0, payload: p0, evaluations });
    }

    // Expand in the direction that closes the sign change.
    let mut br: Bracket<T> = if f0 < 0.0 {
        let mut lo = t0;
        let mut flo = f0;
        let mut plo = p0;
        let mut t = t0;
        loop {
            t *= BRACKET_EXPANSION;
            let (ft, pt) = eval(t, &mut evaluations)?;
            if ft.abs() <= ftol {
                return Ok(ScalarRoot { value: t, payload: pt, evaluations });
            }
            if ft > 0.0 {
                break Bracket { lo, flo, plo, hi: t, fhi: ft, phi: pt };
            }
            lo = t;
            flo = ft;
            plo = pt;
            if evaluations > BRACKET_BUDGET {
                return Err(Error::BracketFailure { lo, hi: t, flo, fhi: ft });
            }
        }
    } else {
        let mut hi = t0;
        let mut fhi = f0;
        let mut phi = p0;
        let mut t = t0;
        loop {
            t /= BRACKET_EXPANSION;
            let (ft, pt) = eval(t, &mut evaluations)?;
            if ft.abs() <= ftol {
                return Ok(ScalarRoot { value: t, payload: pt, evaluations });
            }
            if ft < 0.0 {
                break Bracket { lo: t, flo: ft, plo: pt, hi, fhi, phi };
            }
            hi = t;
            fhi = ft;
            phi = pt;
            if evaluations > BRACKET_BUDGET {
                return Err(Error::BracketFailure { lo: t, hi, flo: ft, fhi });
            }
        }
    };

    // Illinois: halve the retained endpoint's weight when the same side
    // survives twice, so false position cannot stall.
    let mut flo_w = br.flo;
    let mut fhi_w = br.fhi;
    let mut last_side = 0i8;
    for _ in 0..ROOT_MAX_ITER {
        let width = br.hi - br.lo;
        let mid = 0.5 * (br.lo + br.hi);
        if width <= ROOT_WIDTH_REL * mid {
            break;
        }
        let mut t = br.hi - fhi_w * (br.hi - br.lo) / (fhi_w - flo_w);
        let margin = 0.01 * width;
        if !(t > br.lo + margin && t < br.hi - margin) {
            t = mid;
        }
        let (ft, pt) = eval(t, &mut evaluations)?;
        if ft.abs() <= ftol {
            return Ok(ScalarRoot { value: t, payload: pt, evaluations });
        }
        if ft < 0.0 {
            br.lo = t;
            br.flo = ft;
            br.plo = pt;
            flo_w = ft;
            if last_side == -1 {
                fhi_w *= 0.5;
            }
            last_side = -1;
        } else {
            br.hi = t;
            br.fhi = ft;
            br.phi = pt;
            fhi_w = ft;
            if last_side == 1 {
                flo_w *= 0.5;
            }
            last_side = 1;
        }
    }

    let width = br.hi - br.lo;
    if width > ROOT_WIDTH_REL * 0.5 * (br.lo + br.hi) {
        return Err(Error::MaxIterations(ROOT_MAX_ITER));
    }
    if br.flo.abs() <= br.fhi.abs() {
        Ok(ScalarRoot { value: br.lo, payload: br.plo, evaluations })
    } else {
        Ok(ScalarRoot { value: br.hi, payload: br.phi, evaluations })
    }
}

impl EpsProblem {
    pub fn new(operator: Operator, target: DVector<f64>, eps: f64) -> Result<Self> {
        if !eps.is_finite() || eps < 0.0 {
            return Err(Error::InvalidProblem(format!("eps must be finite and >= 0, got {eps}")));
        }
        if target.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidProblem("target has non-finite entries".into()));
        }
        if target.len() != operator.codomain().dim() {
            return Err(Error::DimensionMismatch {
                expected: operator.codomain().dim(),
                got: target.len(),
            });
        }
        let gram_op = GramOperator::new(operator)?;
        let target_norm = gram_op.space_y().norm(&target)?;
        let gy_target = gram_op.space_y().apply_gram(&target)?;
        Ok(Self { gram_op, target, eps, target_norm, gy_target })
    }

    pub fn operator(&self) -> &Operator {
        self.gram_op.operator()
    }

    pub fn gram_op(&self) -> &GramOperator {
        &self.gram_op
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn target_norm(&self) -> f64 {
        self.target_norm
    }

    /// The dual functional `J(v)`.
    pub fn eval_dual(&self, v: &DVector<f64>) -> Result<f64> {
        let y = self.gram_op.space_y();
        let x = self.gram_op.space_x();
        let adj_v = self.gram_op.operator().apply_adjoint(v)?;
        let nx = x.norm(&adj_v)?;
        let ny = y.norm(v)?;
        Ok(0.5 * nx * nx + self.eps * ny - self.gy_target.dot(v))
    }

    fn zero_solution(&self) -> EpsSolution {
        EpsSolution {
            v_tilde: DVector::zeros(self.gram_op.space_y().dim()),
            u_tilde: DVector::zeros(self.gram_op.space_x().dim()),
            s: 0.0,
            eta_star: f64::INFINITY,
            misfit: self.target_norm,
            iterations: 0,
            converged: true,
            cond_estimate: 1.0,
        }
    }

    fn initial_eta(&self, lambda_bar: f64) -> f64 {
        if lambda_bar > 0.0 && self.target_norm > 0.0 {
            self.eps * lambda_bar / self.target_norm
        } else {
            1.0
        }
    }

    fn assemble_solution(
        &self,
        v: DVector<f64>,
        eta: f64,
        iterations: usize,
        lambda_bar: f64,
    ) -> Result<EpsSolution> {
        let op = self.gram_op.operator();
        let u = op.apply_adjoint(&v)?;
        let misfit = self
            .gram_op
            .space_y()
            .norm(&(op.apply(&u)? - &self.target))?;
        let s = self.gram_op.space_y().norm(&v)?;
        Ok(EpsSolution {
            v_tilde: v,
            u_tilde: u,
            s,
            eta_star: eta,
            misfit,
            iterations,
            converged: true,
            cond_estimate: (lambda_bar + eta) / eta,
        })
    }

    /// Solves the dual problem; zero target-norm slack returns the zero
    /// solution, otherwise the constraint is active and
    /// `|misfit - eps| <= ROOT_FTOL_REL * eps` at the returned point.
    pub fn solve_dual(&self) -> Result<EpsSolution> {
        if self.target_norm <= self.eps {
            return Ok(self.zero_solution());
        }
        if self.eps == 0.0 {
            return Err(Error::InvalidProblem(
                "eps must be positive to solve the relaxed problem".into(),
            ));
        }
        let y = self.gram_op.space_y();
        let gy = y.gram();
        let sym = self.gram_op.sym();
        let lambda_bar = self.gram_op.norm_upper();
        let psi = |eta: f64| -> Result<(f64, DVector<f64>)> {
            let s_eta = sym + gy * eta;
            let w = linalg::solve_spd(&s_eta, &self.gy_target)?;
            let norm_w = y.norm(&w)?;
            Ok((eta * norm_w - self.eps, w))
        };
        let root = bracketed_root(psi, self.initial_eta(lambda_bar), ROOT_FTOL_REL * self.eps)?;
        self.assemble_solution(root.payload, root.value, root.evaluations, lambda_bar)
    }

    /// Minimizes `J_E(v) = 1/2 ||L* v||_X^2 + eps ||P_{E^perp} v||_Y - <f, v>_Y`
    /// for a finite-dimensional subspace `E` of Y spanned by `basis_e`.
    ///
    /// The returned `u` satisfies `P_E(L u) = P_E(f)` and
    /// `||L u - f||_Y <= eps`. The smooth E-block is solved exactly; the
    /// orthogonal block is handled by the same scalar root-find as
    /// `solve_dual`, applied to the multiplier of `P_{E^perp}`.
    pub fn solve_finite_dim(&self, basis_e: &[DVector<f64>]) -> Result<EpsSolution> {
        if basis_e.is_empty() {
            return self.solve_dual();
        }
        let y = self.gram_op.space_y();
        let n = y.dim();
        let mut ortho: Vec<DVector<f64>> = Vec::with_capacity(basis_e.len());
        for e in basis_e {
            match y.orthonormalize_against(&ortho, e, 1e-12)? {
                Some(q) => ortho.push(q),
                None => return Err(Error::DependentBasis),
            }
        }
        let m = ortho.len();
        let q = DMatrix::from_fn(n, m, |i, j| ortho[j][i]);
        let gy_q = y.gram() * &q;
        let sym = self.gram_op.sym();

        // E-block: v in E with <Lambda v - f, e>_Y = 0 for all e in E.
        let qbq = q.transpose() * sym * &q;
        let rhs = q.transpose() * &self.gy_target;
        let chol = nalgebra::linalg::Cholesky::new(qbq).ok_or_else(|| {
            Error::LinearSolveFailure("projected Gram operator is not positive definite".into())
        })?;
        let c = chol.solve(&rhs);
        let v_e = &q * c;

        let lambda_bar = self.gram_op.norm_upper();
        let perp_part = |v: &DVector<f64>| -> Result<DVector<f64>> {
            let coeffs = gy_q.transpose() * v;
            Ok(v - &q * coeffs)
        };

        let r_e = self.gram_op.apply(&v_e)? - &self.target;
        let rho = y.norm(&perp_part(&r_e)?)?;
        if rho <= self.eps * (1.0 + 1e-12) {
            // Subgradient condition met inside E; no orthogonal component.
            return self.assemble_solution(v_e, 0.0, 0, lambda_bar);
        }

        // Orthogonal block active: solve (Lambda + zeta P_perp) v = f with
        // zeta * ||P_perp v||_Y = eps.
        let g_perp = y.gram() - &gy_q * gy_q.transpose();
        let psi = |zeta: f64| -> Result<(f64, DVector<f64>)> {
            let s_zeta = sym + &g_perp * zeta;
            let v = linalg::solve_spd(&s_zeta, &self.gy_target)?;
            let norm_perp = y.norm(&perp_part(&v)?)?;
            Ok((zeta * norm_perp - self.eps, v))
        };
        let root = bracketed_root(psi, self.initial_eta(lambda_bar), ROOT_FTOL_REL * self.eps)?;
        self.assemble_solution(root.payload, root.value, root.evaluations, lambda_bar)
    }
}

/// Dual solve for a diagonal `Lambda` given by its eigenvalues and the
/// target's coefficients in the matching Y-orthonormal eigenbasis:
/// `v_k = f_k / (lambda_k + eta*)` with `eta* ||v||  = eps`.
///
/// Returns the coefficient vector and `s = ||v||`. A target with
/// `||f|| <= eps` yields all-zero coefficients and `s = 0`.
pub fn solve_dual_diagonal(
    lambdas: &[f64],
    f_coeffs: &[f64],
    eps: f64,
) -> Result<(Vec<f64>, f64)> {
    if lambdas.len() != f_coeffs.len() {
        return Err(Error::DimensionMismatch { expected: lambdas.len(), got: f_coeffs.len() });
    }
    if lambdas.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
        return Err(Error::InvalidProblem("eigenvalues must be finite and nonnegative".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidProblem(format!("eps must be positive, got {eps}")));
    }
    let f_norm = f_coeffs.iter().map(|x| x * x).sum::<f64>().sqrt();
    if f_norm <= eps {
        return Ok((vec![0.0; lambdas.len()], 0.0));
    }
    let lambda_bar = lambdas.iter().cloned().fold(0.0_f64, f64::max);
    let eta0 = if lambda_bar > 0.0 { eps * lambda_bar / f_norm } else { 1.0 };
    let psi = |eta: f64| -> Result<(f64, ())> {
        let norm: f64 = lambdas
            .iter()
            .zip(f_coeffs)
            .map(|(&l, &f)| {
                let w = f / (l + eta);
                w * w
            })
            .sum::<f64>()
            .sqrt();
        Ok((eta * norm - eps, ()))
    };
    let root = bracketed_root(psi, eta0, ROOT_FTOL_REL * eps)?;
    let eta = root.value;
    let coeffs: Vec<f64> = lambdas.iter().zip(f_coeffs).map(|(&l, &f)| f / (l + eta)).collect();
    let s = coeffs.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok((coeffs, s))
}

/// Smallest Y-eigenvalue of `Lambda + (eps/||v||_Y)(I - P_v)`, the
/// derivative of the Euler-Lagrange map at `v`. Strictly positive whenever
/// `Lambda` is positive definite.
pub fn hessian_min_eig(op: &Operator, v: &DVector<f64>, eps: f64) -> Result<f64> {
    let gram_op = GramOperator::new(op.clone())?;
    let y = gram_op.space_y();
    let norm_v = y.norm(v)?;
    if norm_v == 0.0 {
        return Err(Error::ZeroVector);
    }
    let c = eps / norm_v;
    let gy_v = y.apply_gram(v)?;
    let vgv = gy_v.dot(v);
    // Symmetric form of Lambda + c (I - P_v): G_Y Lambda + c (G_Y - G_Y v v^T G_Y / <v,v>_Y).
    let sym = gram_op.sym() + (y.gram() - &gy_v * gy_v.transpose() / vgv) * c;
    let sym = (&sym + sym.transpose()) * 0.5;
    let (vals, _) = linalg::pencil_eigen(&sym, y.cholesky_l())?;
    Ok(vals[0])
}

//! The linear two-parameter regularization of the dual problem.
//!
//! Replacing the homogeneity-one term of the dual functional by a
//! quadratic one turns the Euler-Lagrange equation into the SPD system
//! `(Lambda + eta I) w = f`. Sweeping `eta` over `[eps/v_+, eps/v_-]`
//! recovers every dual minimizer of the family, since the nonlinear
//! solution corresponds to `eta = eps / ||v||_Y`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::family::ProblemFamily;
use crate::linalg;
use crate::minnorm::EpsProblem;
use crate::operator::{GramOperator, Operator};

/// Relative Y-residual guaranteed by `solve`.
pub const SOLVE_RTOL: f64 = 1e-12;

/// One regularized instance `(Lambda + eta I) w = f`.
pub struct TychProblem {
    gram_op: GramOperator,
    target: DVector<f64>,
    eta: f64,
    gy_target: DVector<f64>,
}

impl TychProblem {
    pub fn new(operator: Operator, target: DVector<f64>, eta: f64) -> Result<Self> {
        Self::from_gram_op(GramOperator::new(operator)?, target, eta)
    }

    /// Builds on an already-assembled `Lambda`; the training loops reuse
    /// one `GramOperator` per parameter across many `eta` values.
    pub fn from_gram_op(gram_op: GramOperator, target: DVector<f64>, eta: f64) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::InvalidProblem(format!("eta must be positive, got {eta}")));
        }
        if target.len() != gram_op.space_y().dim() {
            return Err(Error::DimensionMismatch {
                expected: gram_op.space_y().dim(),
                got: target.len(),
            });
        }
        let gy_target = gram_op.space_y().apply_gram(&target)?;
        Ok(Self { gram_op, target, eta, gy_target })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    pub fn gram_op(&self) -> &GramOperator {
        &self.gram_op
    }

    /// Solves `(Lambda + eta I) w = f` to a Y-residual of
    /// `SOLVE_RTOL * ||f||_Y`, refining the direct solution as needed.
    pub fn solve(&self) -> Result<DVector<f64>> {
        let y = self.gram_op.space_y();
        let s = self.gram_op.sym() + y.gram() * self.eta;
        let mut w = linalg::solve_spd(&s, &self.gy_target)?;
        let f_norm = y.norm(&self.target)?;
        if f_norm == 0.0 {
            return Ok(DVector::zeros(y.dim()));
        }
        for _ in 0..3 {
            let (r, r_norm) = self.residual(&w)?;
            if r_norm <= SOLVE_RTOL * f_norm {
                return Ok(w);
            }
            let correction = linalg::solve_spd(&s, &y.apply_gram(&r)?)?;
            w -= correction;
        }
        let (_, r_norm) = self.residual(&w)?;
        if r_norm <= SOLVE_RTOL * f_norm {
            Ok(w)
        } else {
            Err(Error::LinearSolveFailure(format!(
                "regularized solve stalled at relative residual {:.3e}",
                r_norm / f_norm
            )))
        }
    }

    /// Residual `R = Lambda w + eta w - f` and its Y-norm.
    ///
    /// For the exact solution `w~` the two-sided bounds
    /// `eta ||w~ - w|| <= ||R|| <= (||Lambda|| + eta) ||w~ - w||` hold.
    pub fn residual(&self, w: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        let r = self.gram_op.apply(w)? + w * self.eta - &self.target;
        let norm = self.gram_op.space_y().norm(&r)?;
        Ok((r, norm))
    }
}

/// The admissible range of the regularization parameter together with the
/// solution-norm bounds it derives from.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EtaInterval {
    pub eta_minus: f64,
    pub eta_plus: f64,
    pub v_minus: f64,
    pub v_plus: f64,
}

impl EtaInterval {
    pub fn from_norm_bounds(eps: f64, v_minus: f64, v_plus: f64) -> Result<Self> {
        if !(v_minus > 0.0) || !(v_plus >= v_minus) {
            return Err(Error::InvalidProblem(format!(
                "invalid solution-norm bounds [{v_minus}, {v_plus}]"
            )));
        }
        Ok(Self { eta_minus: eps / v_plus, eta_plus: eps / v_minus, v_minus, v_plus })
    }

    pub fn contains(&self, eta: f64) -> bool {
        eta >= self.eta_minus && eta <= self.eta_plus
    }

    /// Log-uniform grid over the interval, endpoints included.
    pub fn log_grid(&self, count: usize) -> Vec<f64> {
        grid_points(self.eta_minus, self.eta_plus, count, true)
    }

    /// Uniform grid over the interval, endpoints included.
    pub fn linear_grid(&self, count: usize) -> Vec<f64> {
        grid_points(self.eta_minus, self.eta_plus, count, false)
    }
}

fn grid_points(lo: f64, hi: f64, count: usize, log: bool) -> Vec<f64> {
    if count == 0 {
        return Vec::new();
    }
    if count == 1 || hi <= lo {
        return vec![if log { (lo * hi).sqrt() } else { 0.5 * (lo + hi) }];
    }
    (0..count)
        .map(|i| {
            let t = i as f64 / (count - 1) as f64;
            if log {
                (lo.ln() + (hi.ln() - lo.ln()) * t).exp()
            } else {
                lo + (hi - lo) * t
            }
        })
        .collect()
}

/// Estimates `[eta_-, eta_+] = [eps/v_+, eps/v_-]` from offline samples.
///
/// The lower solution-norm bound is the constructive one,
/// `v_- = (min ||f_nu|| - eps) / max ||Lambda_nu||`; the upper bound is
/// empirical, `v_+ = safety_factor * max ||v_nu||` over the sampled dual
/// solves, and downstream containment checks audit it.
pub fn estimate_eta_interval(
    family: &dyn ProblemFamily,
    samples: &[Vec<f64>],
    safety_factor: f64,
) -> Result<EtaInterval> {
    if samples.is_empty() {
        return Err(Error::InvalidProblem("eta-interval estimation needs samples".into()));
    }
    if !(safety_factor >= 1.0) {
        return Err(Error::InvalidProblem(format!(
            "safety factor must be >= 1, got {safety_factor}"
        )));
    }
    let eps = family.eps();
    let mut f_min = f64::INFINITY;
    let mut lambda_max = 0.0_f64;
    let mut v_max = 0.0_f64;
    for nu in samples {
        let assembled = family.assemble(nu)?;
        let problem = EpsProblem::new(assembled.operator, assembled.target, eps)?;
        let f_norm = problem.target_norm();
        if f_norm <= eps {
            return Err(Error::InfeasibleFamily { f_norm, eps });
        }
        f_min = f_min.min(f_norm);
        lambda_max = lambda_max.max(problem.gram_op().norm_exact()?);
        let sol = problem.solve_dual()?;
        v_max = v_max.max(sol.s);
    }
    if lambda_max <= 0.0 {
        return Err(Error::InvalidProblem("family has a vanishing Gram operator".into()));
    }
    let v_minus = (f_min - eps) / lambda_max;
    let v_plus = safety_factor * v_max;
    EtaInterval::from_norm_bounds(eps, v_minus, v_plus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{CustomFamily, NuBox};
    use crate::space::Space;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn diag_tych(lams: &[f64], f: &[f64], eta: f64) -> TychProblem {
        let n = lams.len();
        let l = DMatrix::from_diagonal(&DVector::from_iterator(n, lams.iter().map(|x: &f64| x.sqrt())));
        TychProblem::new(Operator::euclidean(l).unwrap(), DVector::from_row_slice(f), eta).unwrap()
    }

    #[test]
    fn identity_case_divides_by_two() {
        let p = diag_tych(&[1.0, 1.0], &[2.0, 0.0], 1.0);
        let w = p.solve().unwrap();
        assert!((w - DVector::from_vec(vec![1.0, 0.0])).norm() < 1e-13);
    }

    #[test]
    fn diagonal_components_follow_fourier_formula() {
        let lams = [2.0, 0.5, 0.125];
        let f = [1.0, -0.3, 0.7];
        let eta = 0.4;
        let p = diag_tych(&lams, &f, eta);
        let w = p.solve().unwrap();
        for k in 0..3 {
            assert!((w[k] - f[k] / (lams[k] + eta)).abs() < 1e-13);
        }
    }

    #[test]
    fn residual_is_tiny_at_exact_solution() {
        let p = diag_tych(&[1.0, 0.25, 0.0625], &[0.3, 1.0, -0.4], 0.2);
        let w = p.solve().unwrap();
        let (_, norm) = p.residual(&w).unwrap();
        let f_norm = p.target().norm();
        assert!(norm <= 1e-12 * f_norm, "residual {norm}");
    }

    #[test]
    fn residual_diagonal_arithmetic() {
        // Lambda = diag(1, 0.25), eta = 0.5, f = 0, w = e1: R = 1.5 e1.
        let p = diag_tych(&[1.0, 0.25], &[0.0, 0.0], 0.5);
        let w = DVector::from_vec(vec![1.0, 0.0]);
        let (r, norm) = p.residual(&w).unwrap();
        assert!((r - DVector::from_vec(vec![1.5, 0.0])).norm() < 1e-14);
        assert!((norm - 1.5).abs() < 1e-14);
        // Exact solution is 0: bounds eta*1 <= 1.5 <= (||Lambda|| + eta)*1.
        assert!(0.5 <= norm + 1e-12 && norm <= 1.0 + 0.5 + 1e-12);
    }

    #[test]
    fn two_sided_residual_bounds_on_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let n = rng.gen_range(2..10);
            let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let op = Operator::euclidean(m).unwrap();
            let gram_op = GramOperator::new(op).unwrap();
            let lambda_norm = gram_op.norm_exact().unwrap();
            let f = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let eta = rng.gen_range(0.05..2.0);
            let p = TychProblem::from_gram_op(gram_op, f, eta).unwrap();
            let w_exact = p.solve().unwrap();
            let w = DVector::from_fn(n, |_, _| rng.gen_range(-1.5..1.5));
            let (_, r_norm) = p.residual(&w).unwrap();
            let err = (&w_exact - &w).norm();
            assert!(eta * err <= r_norm * (1.0 + 1e-9) + 1e-12);
            assert!(r_norm <= (lambda_norm + eta) * err * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn matches_dual_solver_at_its_eta() {
        let lams = [1.0, 0.25, 0.04];
        let f = [1.0, 0.8, -0.5];
        let eps = 0.4;
        let n = lams.len();
        let l = DMatrix::from_diagonal(&DVector::from_iterator(n, lams.iter().map(|x: &f64| x.sqrt())));
        let ep =
            EpsProblem::new(Operator::euclidean(l).unwrap(), DVector::from_row_slice(&f), eps)
                .unwrap();
        let dual = ep.solve_dual().unwrap();
        let p = diag_tych(&lams, &f, dual.eta_star);
        let w = p.solve().unwrap();
        assert!((&w - &dual.v_tilde).norm() < 1e-8);
    }

    #[test]
    fn damping_is_monotone_in_eta() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let n = rng.gen_range(2..8);
            let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let f = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let op = Operator::euclidean(m).unwrap();
            let gram_op = GramOperator::new(op).unwrap();
            let mut prev = f64::INFINITY;
            for k in 0..12 {
                let eta = 0.01 * 2.0_f64.powi(k);
                let p = TychProblem::from_gram_op(gram_op.clone(), f.clone(), eta).unwrap();
                let w = p.solve().unwrap();
                let norm = w.norm();
                assert!(norm <= prev * (1.0 + 1e-10), "norm grew with eta");
                prev = norm;
            }
        }
    }

    #[test]
    fn interval_formula_single_sample() {
        // f_- = 1, eps = 0.25, L_+ = 2 gives v_- = 0.375, eta_+ = 2/3.
        let x = Arc::new(Space::euclidean(2));
        let y = Arc::new(Space::euclidean(2));
        let family = CustomFamily::new(
            x,
            y,
            NuBox::new(vec![(0.0, 1.0)]).unwrap(),
            0.25,
            |_nu| {
                let m = DMatrix::from_diagonal(&DVector::from_vec(vec![
                    2.0_f64.sqrt(),
                    0.5_f64.sqrt(),
                ]));
                Ok((m, DVector::from_vec(vec![1.0, 0.0])))
            },
        )
        .unwrap();
        let interval = estimate_eta_interval(&family, &[vec![0.5]], 2.0).unwrap();
        assert!((interval.v_minus - 0.375).abs() < 1e-12);
        assert!((interval.eta_plus - 0.25 / 0.375).abs() < 1e-12);
    }

    #[test]
    fn identity_family_norms_are_exact() {
        // L = I: ||v_nu|| = ||f_nu|| - eps, so v_+ = safety * max(...).
        let x = Arc::new(Space::euclidean(2));
        let y = Arc::new(Space::euclidean(2));
        let eps = 0.25;
        let family = CustomFamily::new(
            x,
            y,
            NuBox::new(vec![(1.0, 2.0)]).unwrap(),
            eps,
            |nu| Ok((DMatrix::identity(2, 2), DVector::from_vec(vec![nu[0], 0.0]))),
        )
        .unwrap();
        let samples = vec![vec![1.0], vec![1.5], vec![2.0]];
        let interval = estimate_eta_interval(&family, &samples, 2.0).unwrap();
        assert!((interval.v_plus - 2.0 * (2.0 - eps)).abs() < 1e-9);
        assert!((interval.v_minus - (1.0 - eps) / 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_family_is_reported() {
        let x = Arc::new(Space::euclidean(2));
        let y = Arc::new(Space::euclidean(2));
        let family = CustomFamily::new(
            x,
            y,
            NuBox::new(vec![(0.0, 1.0)]).unwrap(),
            0.5,
            |_nu| Ok((DMatrix::identity(2, 2), DVector::from_vec(vec![0.3, 0.0]))),
        )
        .unwrap();
        match estimate_eta_interval(&family, &[vec![0.0]], 2.0) {
            Err(Error::InfeasibleFamily { .. }) => {}
            other => panic!("expected InfeasibleFamily, got {other:?}"),
        }
    }

    #[test]
    fn spd_shift_has_min_eigenvalue_at_least_eta() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let n = rng.gen_range(2..7);
            let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let gram_op = GramOperator::new(Operator::euclidean(m).unwrap()).unwrap();
            let eta = rng.gen_range(0.01..1.0);
            let shifted = gram_op.sym() + gram_op.space_y().gram() * eta;
            let (vals, _) =
                crate::linalg::pencil_eigen(&shifted, gram_op.space_y().cholesky_l()).unwrap();
            assert!(vals[0] >= eta - 1e-12);
        }
    }
}

//! Offline weak-greedy training of a reduced basis over the product of
//! the parameter box and the regularization interval, plus the online
//! reconstruction that answers per-parameter queries from the basis.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::family::ProblemFamily;
use crate::linalg;
use crate::operator::GramOperator;
use crate::tikhonov::TychProblem;

/// Rejection threshold for orthonormalizing new snapshots.
const ORTHO_THRESHOLD: f64 = 1e-12;

/// Relative eigenvalue cutoff for the online normal-equations solve.
const GRAMIAN_CUTOFF_REL: f64 = 1e-12;

/// The product training set: parameter points times regularization points.
#[derive(Debug, Clone)]
pub struct TrainingGrid {
    nu_points: Vec<Vec<f64>>,
    eta_points: Vec<f64>,
}

impl TrainingGrid {
    pub fn new(nu_points: Vec<Vec<f64>>, eta_points: Vec<f64>) -> Result<Self> {
        if eta_points.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::InvalidProblem("eta grid points must be positive".into()));
        }
        Ok(Self { nu_points, eta_points })
    }

    pub fn nu_points(&self) -> &[Vec<f64>] {
        &self.nu_points
    }

    pub fn eta_points(&self) -> &[f64] {
        &self.eta_points
    }

    pub fn len(&self) -> usize {
        self.nu_points.len() * self.eta_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The trained basis: selected parameter pairs, exact snapshots, their
/// Y-orthonormalization, and the per-iteration max-surrogate history.
#[derive(Debug, Clone)]
pub struct ReducedBasis {
    pub selected: Vec<(Vec<f64>, f64)>,
    pub snapshots: Vec<DVector<f64>>,
    pub ortho: Vec<DVector<f64>>,
    pub history: Vec<f64>,
    pub delta: f64,
    pub converged: bool,
}

impl ReducedBasis {
    pub fn len(&self) -> usize {
        self.ortho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ortho.is_empty()
    }

    fn ortho_matrix(&self, dim_y: usize) -> DMatrix<f64> {
        let m = self.ortho.len();
        DMatrix::from_fn(dim_y, m, |i, j| self.ortho[j][i])
    }
}

/// Result of one online query.
#[derive(Debug, Clone)]
pub struct OnlineResult {
    /// Coefficients with respect to the orthonormalized basis vectors.
    pub alphas: DVector<f64>,
    pub u_approx: DVector<f64>,
    pub misfit: f64,
    /// Set when the normal-equations Gramian needed spectral truncation.
    pub regularized: bool,
}

/// One row of the diagnostic sweep comparing the residual surrogate with
/// the exact projection error at every training point.
#[derive(Debug, Clone)]
pub struct SurrogateRow {
    pub nu: Vec<f64>,
    pub eta: f64,
    pub surrogate: f64,
    pub true_error: f64,
    /// `surrogate / true_error`; `None` where the error is at noise level.
    pub effectivity: Option<f64>,
}

struct NuData {
    nu: Vec<f64>,
    gram_op: GramOperator,
    target: DVector<f64>,
    gy_target: DVector<f64>,
    f_norm: f64,
}

fn assemble_nu_data(family: &dyn ProblemFamily, nu_points: &[Vec<f64>]) -> Result<Vec<NuData>> {
    nu_points
        .par_iter()
        .map(|nu| {
            let assembled = family.assemble(nu)?;
            let gram_op = GramOperator::new(assembled.operator)?;
            let y = gram_op.space_y();
            let gy_target = y.apply_gram(&assembled.target)?;
            let f_norm = y.norm(&assembled.target)?;
            Ok(NuData { nu: nu.clone(), gram_op, target: assembled.target, gy_target, f_norm })
        })
        .collect()
}

/// Galerkin approximations of `(Lambda_nu + eta) w = f_nu` in the span of
/// the columns of `q` (Y-orthonormal), for every `eta`. Returns the
/// residual surrogate and the projected solution per grid point.
fn sweep_nu(
    nd: &NuData,
    q: &DMatrix<f64>,
    etas: &[f64],
) -> Result<Vec<(f64, DVector<f64>)>> {
    let y = nd.gram_op.space_y();
    let n = y.dim();
    let m = q.ncols();
    let mut out = Vec::with_capacity(etas.len());
    if m == 0 {
        for _ in etas {
            out.push((nd.f_norm, DVector::zeros(n)));
        }
        return Ok(out);
    }
    let z = nd.gram_op.lambda() * q;
    let gy_z = y.gram() * &z;
    let qbq_raw = q.transpose() * &gy_z;
    let qbq = (&qbq_raw + qbq_raw.transpose()) * 0.5;
    let rhs = q.transpose() * &nd.gy_target;
    for &eta in etas {
        let reduced = &qbq + DMatrix::identity(m, m) * eta;
        let chol = nalgebra::linalg::Cholesky::new(reduced).ok_or_else(|| {
            Error::LinearSolveFailure("projected regularized system lost definiteness".into())
        })?;
        let c = chol.solve(&rhs);
        let w = q * &c;
        let r = &z * &c + &w * eta - &nd.target;
        let surrogate = y.norm(&r)?;
        out.push((surrogate, w));
    }
    Ok(out)
}

/// Weak-greedy training loop.
///
/// Each iteration computes the Galerkin approximation of every training
/// point in the current basis, evaluates the residual surrogate, selects
/// the maximizer (ties break to the lowest grid index), solves it exactly
/// and extends the basis by the Y-orthonormalized snapshot. The first
/// iteration starts from the zero approximation, so the initial surrogate
/// is `||f_nu||_Y`. Terminates when the max surrogate drops to `delta`.
pub fn train_offline(
    family: &dyn ProblemFamily,
    grid: &TrainingGrid,
    delta: f64,
) -> Result<ReducedBasis> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if !delta.is_finite() || delta < 0.0 {
        return Err(Error::InvalidProblem(format!("delta must be >= 0, got {delta}")));
    }
    let nu_data = assemble_nu_data(family, grid.nu_points())?;
    let y = family.space_y();
    let dim_y = y.dim();
    let etas = grid.eta_points();

    let mut basis = ReducedBasis {
        selected: Vec::new(),
        snapshots: Vec::new(),
        ortho: Vec::new(),
        history: Vec::new(),
        delta,
        converged: false,
    };

    let max_rounds = grid.len() + dim_y + 2;
    for _ in 0..max_rounds {
        let q = basis.ortho_matrix(dim_y);
        let sweeps: Vec<Vec<(f64, DVector<f64>)>> = nu_data
            .par_iter()
            .map(|nd| sweep_nu(nd, &q, etas))
            .collect::<Result<_>>()?;

        let mut best = (0usize, 0usize, f64::NEG_INFINITY);
        for (i_nu, row) in sweeps.iter().enumerate() {
            for (i_eta, (surrogate, _)) in row.iter().enumerate() {
                if *surrogate > best.2 {
                    best = (i_nu, i_eta, *surrogate);
                }
            }
        }
        let (i_nu, i_eta, max_surrogate) = best;
        basis.history.push(max_surrogate);
        if max_surrogate <= delta {
            basis.converged = true;
            return Ok(basis);
        }

        let nd = &nu_data[i_nu];
        let eta = etas[i_eta];
        let snapshot =
            TychProblem::from_gram_op(nd.gram_op.clone(), nd.target.clone(), eta)?.solve()?;
        match y.orthonormalize_against(&basis.ortho, &snapshot, ORTHO_THRESHOLD)? {
            Some(q_new) => {
                basis.selected.push((nd.nu.clone(), eta));
                basis.snapshots.push(snapshot);
                basis.ortho.push(q_new);
            }
            None => {
                return Err(Error::StagnationWithoutConvergence {
                    max_surrogate,
                    delta,
                    partial: Box::new(basis),
                });
            }
        }
    }
    // The round budget exceeds every selectable snapshot, so reaching it
    // means the surrogate refuses to drop below delta.
    let max_surrogate = *basis.history.last().expect("at least one round ran");
    Err(Error::StagnationWithoutConvergence { max_surrogate, delta, partial: Box::new(basis) })
}

/// Online reconstruction at one parameter: least squares for
/// `min_alpha || sum alpha_i Lambda_nu w_i - f_nu ||_Y` via its normal
/// equations, then `u = L_nu* (sum alpha_i w_i)`.
pub fn reconstruct_online(
    basis: &ReducedBasis,
    family: &dyn ProblemFamily,
    nu: &[f64],
) -> Result<OnlineResult> {
    if basis.is_empty() {
        return Err(Error::EmptyBasis);
    }
    let assembled = family.assemble(nu)?;
    let gram_op = GramOperator::new(assembled.operator)?;
    let y = gram_op.space_y();
    let q = basis.ortho_matrix(y.dim());
    let z = gram_op.lambda() * &q;
    let gy_z = y.gram() * &z;
    let gramian_raw = z.transpose() * &gy_z;
    let gramian = (&gramian_raw + gramian_raw.transpose()) * 0.5;
    let rhs = z.transpose() * y.apply_gram(&assembled.target)?;

    // Spectral solve with truncation guards against a near-singular
    // Gramian when snapshots overlap.
    let (vals, vecs) = linalg::sym_eigen(&gramian);
    let max_eig = vals.last().copied().unwrap_or(0.0).max(0.0);
    let cutoff = GRAMIAN_CUTOFF_REL * max_eig;
    let m = basis.len();
    let mut alphas = DVector::zeros(m);
    let mut dropped = 0usize;
    for k in 0..m {
        if vals[k] > cutoff && vals[k] > 0.0 {
            let v_k = vecs.column(k);
            let coeff = v_k.dot(&rhs) / vals[k];
            alphas += v_k * coeff;
        } else {
            dropped += 1;
        }
    }

    let v = &q * &alphas;
    let op = gram_op.operator();
    let u_approx = op.apply_adjoint(&v)?;
    let misfit = y.norm(&(op.apply(&u_approx)? - &assembled.target))?;
    Ok(OnlineResult { alphas, u_approx, misfit, regularized: dropped > 0 })
}

/// Exhaustive diagnostic sweep: for every training point, the residual
/// surrogate of the Galerkin approximation against the exact error, with
/// its effectivity ratio.
pub fn surrogate_report(
    basis: &ReducedBasis,
    grid: &TrainingGrid,
    family: &dyn ProblemFamily,
) -> Result<Vec<SurrogateRow>> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let nu_data = assemble_nu_data(family, grid.nu_points())?;
    let y = family.space_y();
    let q = basis.ortho_matrix(y.dim());
    let etas = grid.eta_points();
    let rows: Vec<Vec<SurrogateRow>> = nu_data
        .par_iter()
        .map(|nd| -> Result<Vec<SurrogateRow>> {
            let sweep = sweep_nu(nd, &q, etas)?;
            let mut out = Vec::with_capacity(etas.len());
            for (i_eta, (surrogate, w_proj)) in sweep.into_iter().enumerate() {
                let eta = etas[i_eta];
                let exact = TychProblem::from_gram_op(nd.gram_op.clone(), nd.target.clone(), eta)?
                    .solve()?;
                let true_error = y.norm(&(&exact - &w_proj))?;
                let effectivity = if true_error > 1e-13 * nd.f_norm.max(1.0) {
                    Some(surrogate / true_error)
                } else {
                    None
                };
                out.push(SurrogateRow { nu: nd.nu.clone(), eta, surrogate, true_error, effectivity });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{CustomFamily, NuBox};
    use crate::minnorm::EpsProblem;
    use crate::space::Space;
    use std::sync::Arc;

    /// Six-dimensional Euclidean family with a two-parameter coefficient
    /// modulation; rich enough that the greedy needs several snapshots.
    fn synthetic_family() -> impl ProblemFamily {
        let n = 6;
        let x = Arc::new(Space::euclidean(n));
        let y = Arc::new(Space::euclidean(n));
        CustomFamily::new(
            x,
            y,
            NuBox::new(vec![(0.0, 1.0), (0.0, 1.0)]).unwrap(),
            0.05,
            move |nu| {
                let diag = DVector::from_fn(6, |i, _| {
                    let base = 1.0 / (1.0 + i as f64);
                    base * (1.0 + 0.8 * nu[0]) + 0.3 * nu[1] * (i as f64 * 0.9).sin().abs()
                });
                let f = DVector::from_fn(6, |i, _| {
                    (1.0 - 0.4 * nu[0]) / (1.0 + i as f64) + 0.5 * nu[1] * (0.37 * i as f64).cos()
                });
                Ok((DMatrix::from_diagonal(&diag.map(|d| d.sqrt())), f))
            },
        )
        .unwrap()
    }

    fn eta_grid() -> Vec<f64> {
        (0..6).map(|k| 0.05 * 2.0_f64.powi(k)).collect()
    }

    #[test]
    fn single_point_grid_selects_once() {
        let family = synthetic_family();
        let grid = TrainingGrid::new(vec![vec![0.3, 0.7]], vec![0.2]).unwrap();
        let basis = train_offline(&family, &grid, 1e-10).unwrap();
        assert_eq!(basis.len(), 1);
        assert!(basis.converged);
        assert_eq!(basis.history.len(), 2);
        assert!(basis.history[1] <= 1e-10);
    }

    #[test]
    fn rank_one_manifold_needs_one_snapshot() {
        let n = 5;
        let x = Arc::new(Space::euclidean(n));
        let y = Arc::new(Space::euclidean(n));
        let f = DVector::from_fn(n, |i, _| 1.0 / (1.0 + i as f64));
        let family = CustomFamily::new(
            x,
            y,
            NuBox::new(vec![(0.5, 2.0)]).unwrap(),
            0.01,
            move |nu| Ok((DMatrix::identity(5, 5) * nu[0].sqrt(), f.clone())),
        )
        .unwrap();
        let nu_points: Vec<Vec<f64>> = (0..7).map(|k| vec![0.5 + 0.25 * k as f64]).collect();
        let grid = TrainingGrid::new(nu_points, eta_grid()).unwrap();
        let basis = train_offline(&family, &grid, 1e-10).unwrap();
        assert_eq!(basis.len(), 1, "solution manifold is one-dimensional");
        assert!(*basis.history.last().unwrap() <= 1e-10);
    }

    #[test]
    fn history_decreases_and_ortho_is_orthonormal() {
        let family = synthetic_family();
        let nu_points: Vec<Vec<f64>> = NuBox::new(vec![(0.0, 1.0), (0.0, 1.0)])
            .unwrap()
            .grid(&[3, 3])
            .unwrap();
        let grid = TrainingGrid::new(nu_points, eta_grid()).unwrap();
        let basis = train_offline(&family, &grid, 1e-8).unwrap();
        assert!(basis.converged);
        for w in basis.history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "history not nonincreasing: {w:?}");
        }
        let y = family.space_y();
        for i in 0..basis.len() {
            for j in 0..basis.len() {
                let ip = y.inner(&basis.ortho[i], &basis.ortho[j]).unwrap();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((ip - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let family = synthetic_family();
        let nu_points: Vec<Vec<f64>> = NuBox::new(vec![(0.0, 1.0), (0.0, 1.0)])
            .unwrap()
            .grid(&[3, 3])
            .unwrap();
        let grid = TrainingGrid::new(nu_points, eta_grid()).unwrap();
        let a = train_offline(&family, &grid, 1e-8).unwrap();
        let b = train_offline(&family, &grid, 1e-8).unwrap();
        assert_eq!(a.selected, b.selected);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn unreachable_delta_stagnates_with_partial_basis() {
        let family = synthetic_family();
        let nu_points: Vec<Vec<f64>> = NuBox::new(vec![(0.0, 1.0), (0.0, 1.0)])
            .unwrap()
            .grid(&[2, 2])
            .unwrap();
        let grid = TrainingGrid::new(nu_points, eta_grid()).unwrap();
        match train_offline(&family, &grid, 0.0) {
            Err(Error::StagnationWithoutConvergence { partial, max_surrogate, .. }) => {
                assert!(!partial.is_empty());
                assert!(!partial.converged);
                assert!(max_surrogate > 0.0);
            }
            other => panic!("expected stagnation, got {:?}", other.map(|b| b.len())),
        }
    }

    #[test]
    fn empty_grid_is_rejected() {
        let family = synthetic_family();
        let grid = TrainingGrid::new(vec![], eta_grid()).unwrap();
        match train_offline(&family, &grid, 1e-6) {
            Err(Error::EmptyGrid) => {}
            other => panic!("expected EmptyGrid, got {:?}", other.map(|b| b.len())),
        }
    }

    #[test]
    fn online_rejects_empty_basis() {
        let family = synthetic_family();
        let basis = ReducedBasis {
            selected: vec![],
            snapshots: vec![],
            ortho: vec![],
            history: vec![],
            delta: 1e-6,
            converged: false,
        };
        match reconstruct_online(&basis, &family, &[0.5, 0.5]) {
            Err(Error::EmptyBasis) => {}
            other => panic!("expected EmptyBasis, got {:?}", other.map(|r| r.misfit)),
        }
    }

    #[test]
    fn full_span_basis_reconstructs_exactly() {
        let family = synthetic_family();
        let nu_points: Vec<Vec<f64>> = NuBox::new(vec![(0.0, 1.0), (0.0, 1.0)])
            .unwrap()
            .grid(&[4, 4])
            .unwrap();
        let grid = TrainingGrid::new(nu_points, eta_grid()).unwrap();
        let basis = train_offline(&family, &grid, 1e-11).unwrap();
        assert_eq!(basis.len(), family.space_y().dim(), "expected a saturating basis");
        let result = reconstruct_online(&basis, &family, &[0.23, 0.81]).unwrap();
        let f_norm = {
            let a = family.assemble(&[0.23, 0.81]).unwrap();
            family.space_y().norm(&a.target).unwrap()
        };
        assert!(result.misfit <= 1e-10 * f_norm.max(1.0), "misfit {}", result.misfit);
    }

    #[test]
    fn snapshot_membership_gives_eps_misfit() {
        let family = synthetic_family();
        let eps = family.eps();
        let nu_star = vec![0.5, 0.25];
        let assembled = family.assemble(&nu_star).unwrap();
        let problem = EpsProblem::new(assembled.operator, assembled.target, eps).unwrap();
        let dual = problem.solve_dual().unwrap();
        // Train on a grid that contains (nu*, eta*) so the dual solution
        // itself is reachable from the basis.
        let nu_points = vec![nu_star.clone(), vec![0.1, 0.9]];
        let mut etas = eta_grid();
        etas.push(dual.eta_star);
        let grid = TrainingGrid::new(nu_points, etas).unwrap();
        let basis = train_offline(&family, &grid, 1e-9).unwrap();
        let result = reconstruct_online(&basis, &family, &nu_star).unwrap();
        assert!(
            result.misfit <= eps * (1.0 + 1e-6),
            "misfit {} vs eps {eps}",
            result.misfit
        );
    }

    #[test]
    fn online_consistency_with_all_exact_snapshots() {
        let family = synthetic_family();
        let eps = family.eps();
        let nu_points: Vec<Vec<f64>> = NuBox::new(vec![(0.0, 1.0), (0.0, 1.0)])
            .unwrap()
            .grid(&[2, 2])
            .unwrap();
        // Build the basis directly from exact solves of every training
        // point, no greedy truncation.
        let etas = eta_grid();
        let y = family.space_y().clone();
        let mut basis = ReducedBasis {
            selected: vec![],
            snapshots: vec![],
            ortho: vec![],
            history: vec![],
            delta: 0.0,
            converged: true,
        };
        for nu in &nu_points {
            let assembled = family.assemble(nu).unwrap();
            let gram_op = GramOperator::new(assembled.operator).unwrap();
            for &eta in &etas {
                let w = TychProblem::from_gram_op(gram_op.clone(), assembled.target.clone(), eta)
                    .unwrap()
                    .solve()
                    .unwrap();
                if let Some(q) = y.orthonormalize_against(&basis.ortho, &w, 1e-12).unwrap() {
                    basis.selected.push((nu.clone(), eta));
                    basis.snapshots.push(w);
                    basis.ortho.push(q);
                }
            }
        }
        for nu in &nu_points {
            let result = reconstruct_online(&basis, &family, nu).unwrap();
            assert!(
                result.misfit <= eps * (1.0 + 1e-6),
                "misfit {} at nu {nu:?}",
                result.misfit
            );
        }
    }

    #[test]
    fn report_on_empty_basis_returns_target_norms() {
        let family = synthetic_family();
        let nu_points = vec![vec![0.2, 0.2], vec![0.8, 0.5]];
        let grid = TrainingGrid::new(nu_points.clone(), vec![0.1, 0.4]).unwrap();
        let basis = ReducedBasis {
            selected: vec![],
            snapshots: vec![],
            ortho: vec![],
            history: vec![],
            delta: 1e-6,
            converged: false,
        };
        let rows = surrogate_report(&basis, &grid, &family).unwrap();
        assert_eq!(rows.len(), 4);
        for row in &rows {
            let assembled = family.assemble(&row.nu).unwrap();
            let f_norm = family.space_y().norm(&assembled.target).unwrap();
            assert!((row.surrogate - f_norm).abs() < 1e-12);
        }
    }

    #[test]
    fn effectivity_stays_in_the_residual_bracket() {
        let family = synthetic_family();
        let nu_points: Vec<Vec<f64>> = NuBox::new(vec![(0.0, 1.0), (0.0, 1.0)])
            .unwrap()
            .grid(&[3, 2])
            .unwrap();
        let grid = TrainingGrid::new(nu_points, vec![0.1, 0.5, 1.0]).unwrap();
        // Deliberately under-converged basis so true errors are visible.
        let basis = match train_offline(&family, &grid, 1e-2) {
            Ok(b) => b,
            Err(e) => panic!("training failed: {e}"),
        };
        let rows = surrogate_report(&basis, &grid, &family).unwrap();
        for row in rows {
            let assembled = family.assemble(&row.nu).unwrap();
            let lambda_norm =
                GramOperator::new(assembled.operator).unwrap().norm_exact().unwrap();
            if let Some(eff) = row.effectivity {
                assert!(
                    eff >= row.eta * (1.0 - 1e-9) && eff <= (lambda_norm + row.eta) * (1.0 + 1e-9),
                    "effectivity {eff} outside [{}, {}]",
                    row.eta,
                    lambda_norm + row.eta
                );
            }
            // Certified bound from the lower residual inequality.
            assert!(row.true_error <= row.surrogate / row.eta * (1.0 + 1e-9) + 1e-12);
        }
    }
}

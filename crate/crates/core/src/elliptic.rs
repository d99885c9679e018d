//! 1D variable-coefficient Dirichlet operators `-(a_nu u')'` on discrete
//! H^2 and H^-1 spaces: the concrete test family for the solver stack.
//!
//! With `K_0` the constant-coefficient stiffness matrix on `n` interior
//! points, the space grams are `G_X = h K_0^2` (discrete `<u'', v''>`,
//! equivalent to the H^2 graph norm by elliptic regularity) and
//! `G_Y = h K_0^{-1}` (discrete H^-1 inner product). The operator at a
//! parameter is the flux-form stiffness matrix `K_nu`, whose Gram-based
//! adjoint has the closed form `K_0^{-2} K_nu K_0^{-1}`; the independent
//! assembly of that formula doubles as a correctness oracle.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::family::{Assembled, NuBox, ProblemFamily};
use crate::linalg::{self, Tridiag};
use crate::minnorm::{EpsProblem, EpsSolution};
use crate::operator::{GramOperator, Operator};
use crate::space::Space;

/// A scalar diffusion coefficient `a_nu(x)` with declared uniform bounds
/// `0 < alpha <= a_nu(x) <= upper`.
pub struct CoefficientField {
    eval: Box<dyn Fn(&[f64], f64) -> f64 + Send + Sync>,
    alpha: f64,
    upper: f64,
}

impl CoefficientField {
    /// `a(nu, x) = base + nu_1 + nu_2 sin(frequency * pi * x)`, with the
    /// bounds computed analytically from the parameter box. Affine in the
    /// parameter, so the family depends on it analytically.
    pub fn affine_sine(base: f64, frequency: u32, nu_box: &NuBox) -> Result<Self> {
        if frequency == 0 {
            return Err(Error::InvalidProblem("sine frequency must be >= 1".into()));
        }
        let (lo1, hi1) = nu_box.bounds()[0];
        let (lo2, hi2) = if nu_box.dim() >= 2 { nu_box.bounds()[1] } else { (0.0, 0.0) };
        // Range of sin(k pi x) on (0, 1): [0, 1] for k = 1, [-1, 1] otherwise.
        let (s_min, s_max) = if frequency == 1 { (0.0, 1.0) } else { (-1.0, 1.0) };
        let products = [lo2 * s_min, lo2 * s_max, hi2 * s_min, hi2 * s_max];
        let sin_lo = products.iter().cloned().fold(f64::INFINITY, f64::min);
        let sin_hi = products.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let alpha = base + lo1 + sin_lo;
        let upper = base + hi1 + sin_hi;
        if !(alpha > 0.0) {
            return Err(Error::InvalidProblem(format!(
                "coefficient lower bound {alpha} is not positive"
            )));
        }
        let k = frequency as f64;
        Ok(Self {
            eval: Box::new(move |nu: &[f64], x: f64| {
                let nu2 = nu.get(1).copied().unwrap_or(0.0);
                base + nu[0] + nu2 * (k * std::f64::consts::PI * x).sin()
            }),
            alpha,
            upper,
        })
    }

    pub fn constant(value: f64) -> Result<Self> {
        if !(value > 0.0) {
            return Err(Error::InvalidProblem(format!("constant coefficient {value} <= 0")));
        }
        Ok(Self { eval: Box::new(move |_, _| value), alpha: value, upper: value })
    }

    pub fn custom(
        eval: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
        alpha: f64,
        upper: f64,
    ) -> Result<Self> {
        if !(alpha > 0.0) || !(upper >= alpha) {
            return Err(Error::InvalidProblem(format!("invalid coefficient bounds [{alpha}, {upper}]")));
        }
        Ok(Self { eval: Box::new(eval), alpha, upper })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn eval(&self, nu: &[f64], x: f64) -> f64 {
        (self.eval)(nu, x)
    }
}

/// How the right-hand sides `f_nu` are built.
pub enum ForcingSpec {
    /// `f_nu = (rough_weight_base - nu_1) phi_rough + nu_2 phi_smooth`,
    /// where `phi_rough` has H^-1 coefficients proportional to `1/k`
    /// against the constant-coefficient eigenbasis (so its exact preimage
    /// norm diverges under mesh refinement) and `phi_smooth` has
    /// geometrically decaying coefficients. Both are Y-normalized.
    RoughSmooth { rough_weight_base: f64, smooth_decay: f64 },
}

enum Forcing {
    Affine { rough: DVector<f64>, smooth: DVector<f64>, rough_weight_base: f64 },
}

/// Constant-coefficient three-point stiffness matrix on `n` interior
/// points of the unit interval.
pub fn constant_stiffness(n: usize) -> Tridiag {
    stiffness_from_fn(n, |_| 1.0)
}

/// Flux-form stiffness with midpoint coefficient sampling:
/// `(K u)_i = -(a_{i+1/2}(u_{i+1}-u_i) - a_{i-1/2}(u_i-u_{i-1}))/h^2`.
pub fn stiffness_from_fn(n: usize, a: impl Fn(f64) -> f64) -> Tridiag {
    let h = 1.0 / (n as f64 + 1.0);
    let inv_h2 = 1.0 / (h * h);
    let mid: Vec<f64> = (0..=n).map(|k| a((k as f64 + 0.5) * h)).collect();
    let diag: Vec<f64> = (0..n).map(|j| (mid[j] + mid[j + 1]) * inv_h2).collect();
    let off: Vec<f64> = (0..n.saturating_sub(1)).map(|j| -mid[j + 1] * inv_h2).collect();
    Tridiag::new(diag, off)
}

/// Discrete `H^2 \cap H^1_0` and `H^-1` spaces for `n` interior points:
/// `G_X = h K_0^2`, `G_Y = h K_0^{-1}`.
pub fn assemble_spaces(n: usize) -> Result<(Arc<Space>, Arc<Space>)> {
    if n == 0 {
        return Err(Error::InvalidProblem("grid must have at least one interior point".into()));
    }
    let h = 1.0 / (n as f64 + 1.0);
    let k0 = constant_stiffness(n);
    let k0_dense = k0.to_dense();
    let gx = (&k0_dense * &k0_dense) * h;
    let gy = k0.inverse_dense()? * h;
    Ok((Arc::new(Space::new(gx)?), Arc::new(Space::new(gy)?)))
}

/// Eigenpairs of the constant-coefficient stiffness matrix:
/// `lambda_k = (4/h^2) sin^2(k pi h / 2)` with discrete sine eigenvectors,
/// returned Y-orthonormalized (columns of the second entry).
pub fn eigen_constant(n: usize) -> (Vec<f64>, DMatrix<f64>) {
    let h = 1.0 / (n as f64 + 1.0);
    let lambdas: Vec<f64> = (1..=n)
        .map(|k| {
            let s = (k as f64 * std::f64::consts::PI * h / 2.0).sin();
            4.0 / (h * h) * s * s
        })
        .collect();
    let vectors = DMatrix::from_fn(n, n, |i, col| {
        let k = col + 1;
        let scale = (2.0 * lambdas[col]).sqrt();
        scale * (k as f64 * std::f64::consts::PI * (i as f64 + 1.0) * h).sin()
    });
    (lambdas, vectors)
}

/// The parametric elliptic family at a fixed discretization.
pub struct EllipticFamily {
    n: usize,
    h: f64,
    coeff: CoefficientField,
    forcing: Forcing,
    nu_box: NuBox,
    eps: f64,
    space_x: Arc<Space>,
    space_y: Arc<Space>,
    k0: Tridiag,
    lambda0: Vec<f64>,
    psi_y: DMatrix<f64>,
}

impl EllipticFamily {
    pub fn new(
        n: usize,
        coeff: CoefficientField,
        forcing: ForcingSpec,
        nu_box: NuBox,
        eps: f64,
    ) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidProblem(format!("eps must be positive, got {eps}")));
        }
        let (space_x, space_y) = assemble_spaces(n)?;
        let k0 = constant_stiffness(n);
        let (lambda0, psi_y) = eigen_constant(n);
        let forcing = match forcing {
            ForcingSpec::RoughSmooth { rough_weight_base, smooth_decay } => {
                if !(smooth_decay > 0.0 && smooth_decay < 1.0) {
                    return Err(Error::InvalidProblem(format!(
                        "smooth decay must lie in (0,1), got {smooth_decay}"
                    )));
                }
                let rough = spectral_profile(&psi_y, |k| 1.0 / k as f64);
                let smooth = spectral_profile(&psi_y, |k| smooth_decay.powi(k as i32));
                Forcing::Affine { rough, smooth, rough_weight_base }
            }
        };
        Ok(Self {
            n,
            h: 1.0 / (n as f64 + 1.0),
            coeff,
            forcing,
            nu_box,
            eps,
            space_x,
            space_y,
            k0,
            lambda0,
            psi_y,
        })
    }

    /// Default desk-scale family: `a = 1 + nu_1 + nu_2 sin(2 pi x)` over
    /// `[0,1] x [0,0.4]` (coefficient bounds `[0.6, 2.4]`) with the
    /// rough/smooth forcing mix.
    pub fn default_desk(n: usize, eps: f64) -> Result<Self> {
        let nu_box = NuBox::new(vec![(0.0, 1.0), (0.0, 0.4)])?;
        let coeff = CoefficientField::affine_sine(1.0, 2, &nu_box)?;
        let forcing = ForcingSpec::RoughSmooth { rough_weight_base: 1.5, smooth_decay: 0.6 };
        Self::new(n, coeff, forcing, nu_box, eps)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn coeff(&self) -> &CoefficientField {
        &self.coeff
    }

    pub fn k0(&self) -> &Tridiag {
        &self.k0
    }

    pub fn lambda0(&self) -> &[f64] {
        &self.lambda0
    }

    /// Y-orthonormalized eigenvectors of the constant-coefficient operator.
    pub fn psi_y(&self) -> &DMatrix<f64> {
        &self.psi_y
    }

    fn check_nu(&self, nu: &[f64]) -> Result<()> {
        if !self.nu_box.contains(nu) {
            return Err(Error::OutOfBox(nu.to_vec()));
        }
        Ok(())
    }

    /// Flux-form stiffness matrix at `nu`, with every sampled coefficient
    /// checked against the declared lower bound.
    pub fn assemble_stiffness(&self, nu: &[f64]) -> Result<Tridiag> {
        self.check_nu(nu)?;
        let n = self.n;
        let h = self.h;
        let alpha = self.coeff.alpha();
        let mut mid = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let x = (k as f64 + 0.5) * h;
            let value = self.coeff.eval(nu, x);
            if !value.is_finite() || value < alpha - 1e-12 {
                return Err(Error::CoercivityViolation { x, value, alpha });
            }
            mid.push(value);
        }
        let inv_h2 = 1.0 / (h * h);
        let diag: Vec<f64> = (0..n).map(|j| (mid[j] + mid[j + 1]) * inv_h2).collect();
        let off: Vec<f64> = (0..n - 1).map(|j| -mid[j + 1] * inv_h2).collect();
        Ok(Tridiag::new(diag, off))
    }

    pub fn operator(&self, nu: &[f64]) -> Result<Operator> {
        let k_nu = self.assemble_stiffness(nu)?;
        Operator::new(k_nu.to_dense(), Arc::clone(&self.space_x), Arc::clone(&self.space_y))
    }

    pub fn target(&self, nu: &[f64]) -> Result<DVector<f64>> {
        self.check_nu(nu)?;
        match &self.forcing {
            Forcing::Affine { rough, smooth, rough_weight_base } => {
                let nu2 = nu.get(1).copied().unwrap_or(0.0);
                Ok(rough * (rough_weight_base - nu[0]) + smooth * nu2)
            }
        }
    }

    /// The closed-form adjoint `K_0^{-2} K_nu K_0^{-1}`, assembled through
    /// tridiagonal solves only; independent of the Gram-based route.
    pub fn analytic_adjoint(&self, nu: &[f64]) -> Result<DMatrix<f64>> {
        let k_nu = self.assemble_stiffness(nu)?;
        let n = self.n;
        let mut adj = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            let t1 = self.k0.solve(&e)?;
            let t2 = k_nu.matvec(&t1);
            let t3 = self.k0.solve(&t2)?;
            let t4 = self.k0.solve(&t3)?;
            adj.set_column(j, &t4);
        }
        Ok(adj)
    }

    /// Minimal-norm approximate solve at one parameter.
    pub fn solve_eps(&self, nu: &[f64]) -> Result<EpsSolution> {
        self.solve_eps_with(nu, self.eps)
    }

    pub fn solve_eps_with(&self, nu: &[f64], eps: f64) -> Result<EpsSolution> {
        let operator = self.operator(nu)?;
        let target = self.target(nu)?;
        EpsProblem::new(operator, target, eps)?.solve_dual()
    }
}

fn spectral_profile(psi_y: &DMatrix<f64>, coeff: impl Fn(usize) -> f64) -> DVector<f64> {
    let n = psi_y.nrows();
    let mut c = DVector::from_fn(n, |k, _| coeff(k + 1));
    let norm = c.norm();
    c /= norm;
    psi_y * c
}

impl ProblemFamily for EllipticFamily {
    fn space_x(&self) -> &Arc<Space> {
        &self.space_x
    }

    fn space_y(&self) -> &Arc<Space> {
        &self.space_y
    }

    fn nu_box(&self) -> &NuBox {
        &self.nu_box
    }

    fn eps(&self) -> f64 {
        self.eps
    }

    fn assemble(&self, nu: &[f64]) -> Result<Assembled> {
        Ok(Assembled { operator: self.operator(nu)?, target: self.target(nu)? })
    }
}

/// Numerical audit of the family assumptions, reported by the CLI's
/// `validate` command.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FamilyAudit {
    pub n: usize,
    pub eps: f64,
    /// Declared coefficient lower bound.
    pub alpha: f64,
    pub coeff_min_sampled: f64,
    pub coeff_max_sampled: f64,
    /// `f_- = min ||f_nu||_Y` over the samples.
    pub f_norm_min: f64,
    pub f_norm_argmin: Vec<f64>,
    /// `L_+ = max ||Lambda_nu||` over the samples.
    pub lambda_norm_max: f64,
    /// `min_nu lambda_min(K_nu) - alpha * lambda_min(K_0)`; uniform
    /// coercivity requires this to be nonnegative (up to roundoff).
    pub coercivity_margin: f64,
    /// Max over samples of the generalized-eigenvalue spread between the
    /// `G_X` norm and the graph norm `h (I + K_nu^2)`.
    pub graph_norm_equivalence: f64,
    /// Empirical lower bound `c` with `Lambda_nu >= c * K_0^{-1}` on Y.
    pub c_estimate: f64,
    pub beta: f64,
    pub beta_ratio_min: f64,
    pub beta_ratio_max: f64,
    pub beta_lower_bound: f64,
    pub beta_upper_bound: f64,
    pub beta_convention_note: String,
    pub coercivity_ok: bool,
    /// A3: all sampled targets stay strictly above eps.
    pub targets_ok: bool,
    pub graph_norm_ok: bool,
}

impl FamilyAudit {
    pub fn all_ok(&self) -> bool {
        self.coercivity_ok && self.targets_ok && self.graph_norm_ok
    }

    pub fn failing_check(&self) -> Option<&'static str> {
        if !self.targets_ok {
            Some("A3 violated: a sampled target norm does not exceed eps")
        } else if !self.coercivity_ok {
            Some("A2/H1 violated: sampled stiffness loses uniform coercivity")
        } else if !self.graph_norm_ok {
            Some("H3 violated: graph-norm equivalence constant diverges")
        } else {
            None
        }
    }
}

/// Runs the assumption audit over the given parameter samples. `beta` is
/// the shift used by the optional norm-bound diagnostic (its sign is
/// taken absolute in the reported lower bound).
pub fn audit(family: &EllipticFamily, nu_samples: &[Vec<f64>], beta: f64) -> Result<FamilyAudit> {
    if nu_samples.is_empty() {
        return Err(Error::InvalidProblem("audit needs at least one sample".into()));
    }
    let eps = family.eps();
    let n = family.n();
    let h = family.h();
    let y = family.space_y();
    let k0_dense = family.k0().to_dense();
    let (lambda0_min, _) = {
        let (vals, _) = linalg::sym_eigen(&k0_dense);
        (vals[0], vals[vals.len() - 1])
    };
    let gx = family.space_x().gram().clone();
    let gy_k0inv = family.k0().inverse_dense()? * h;
    let gy_k0inv = &gy_k0inv * family.k0().inverse_dense()?;
    let gy_k0inv = (&gy_k0inv + gy_k0inv.transpose()) * 0.5;
    let k0inv_chol = nalgebra::linalg::Cholesky::new(gy_k0inv.clone())
        .ok_or(Error::NotPositiveDefinite)?
        .l();

    let alpha = family.coeff().alpha();
    let abs_beta = beta.abs();
    let mut coeff_min = f64::INFINITY;
    let mut coeff_max = f64::NEG_INFINITY;
    let mut f_min = f64::INFINITY;
    let mut f_argmin = nu_samples[0].clone();
    let mut lambda_max = 0.0_f64;
    let mut coercivity_margin = f64::INFINITY;
    let mut graph_ratio_max = 0.0_f64;
    let mut c_estimate = f64::INFINITY;
    let mut stiffness_min = f64::INFINITY;
    let mut beta_ratio_min = f64::INFINITY;
    let mut beta_ratio_max = 0.0_f64;

    for nu in nu_samples {
        for k in 0..=n {
            let x = (k as f64 + 0.5) * h;
            let a = family.coeff().eval(nu, x);
            coeff_min = coeff_min.min(a);
            coeff_max = coeff_max.max(a);
        }
        let target = family.target(nu)?;
        let f_norm = y.norm(&target)?;
        if f_norm < f_min {
            f_min = f_norm;
            f_argmin = nu.clone();
        }
        let operator = family.operator(nu)?;
        let k_nu_dense = operator.matrix().clone();
        let gram_op = GramOperator::new(operator)?;
        lambda_max = lambda_max.max(gram_op.norm_exact()?);

        let (k_vals, _) = linalg::sym_eigen(&k_nu_dense);
        let k_min = k_vals[0];
        let k_max = k_vals[k_vals.len() - 1];
        stiffness_min = stiffness_min.min(k_min);
        coercivity_margin = coercivity_margin.min(k_min - alpha * lambda0_min);
        beta_ratio_min = beta_ratio_min.min(k_min / (k_min + abs_beta));
        beta_ratio_max = beta_ratio_max.max(k_max / (k_max + abs_beta));

        // Graph norm h (I + K_nu^2) against G_X = h K_0^2.
        let graph = (DMatrix::identity(n, n) + &k_nu_dense * &k_nu_dense) * h;
        let graph = (&graph + graph.transpose()) * 0.5;
        let gx_chol = nalgebra::linalg::Cholesky::new(gx.clone())
            .ok_or(Error::NotPositiveDefinite)?
            .l();
        let (ratios, _) = linalg::pencil_eigen(&graph, &gx_chol)?;
        let spread = ratios[ratios.len() - 1] / ratios[0];
        graph_ratio_max = graph_ratio_max.max(spread);

        // Lambda_nu >= c * K_0^{-1} on Y, as a pencil against h K_0^{-2}.
        let (c_vals, _) = linalg::pencil_eigen(gram_op.sym(), &k0inv_chol)?;
        c_estimate = c_estimate.min(c_vals[0]);
    }

    let beta_lower_bound = stiffness_min / (abs_beta + stiffness_min);
    Ok(FamilyAudit {
        n,
        eps,
        alpha,
        coeff_min_sampled: coeff_min,
        coeff_max_sampled: coeff_max,
        f_norm_min: f_min,
        f_norm_argmin: f_argmin,
        lambda_norm_max: lambda_max,
        coercivity_margin,
        graph_norm_equivalence: graph_ratio_max,
        c_estimate,
        beta,
        beta_ratio_min,
        beta_ratio_max,
        beta_lower_bound,
        beta_upper_bound: 1.0,
        beta_convention_note:
            "operator norm bounds evaluate the shifted norm with |beta|: the lower bound reads \
             alpha/(|beta| + alpha), not alpha/(beta + alpha)"
                .into(),
        coercivity_ok: coercivity_margin >= -1e-10 && coeff_min >= alpha - 1e-12,
        targets_ok: f_min > eps,
        graph_norm_ok: graph_ratio_max.is_finite() && graph_ratio_max < 1e8,
    })
}

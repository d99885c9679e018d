//! Parameter-dependent problem families: a compact parameter box together
//! with an assembler `nu -> (L_nu, f_nu)` over fixed spaces.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::operator::Operator;
use crate::space::Space;

/// Compact box of admissible parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NuBox {
    bounds: Vec<(f64, f64)>,
}

impl NuBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidProblem("parameter box must have dimension >= 1".into()));
        }
        for &(lo, hi) in &bounds {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::InvalidProblem(format!(
                    "invalid parameter range [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { bounds })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn contains(&self, nu: &[f64]) -> bool {
        nu.len() == self.bounds.len()
            && nu
                .iter()
                .zip(&self.bounds)
                .all(|(&x, &(lo, hi))| x.is_finite() && x >= lo && x <= hi)
    }

    /// Tensor grid with the given number of points per dimension,
    /// endpoints included (a single point falls on the midpoint).
    pub fn grid(&self, per_dim: &[usize]) -> Result<Vec<Vec<f64>>> {
        if per_dim.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: per_dim.len() });
        }
        if per_dim.iter().any(|&c| c == 0) {
            return Err(Error::InvalidProblem("grid counts must be positive".into()));
        }
        let axes: Vec<Vec<f64>> = self
            .bounds
            .iter()
            .zip(per_dim)
            .map(|(&(lo, hi), &count)| {
                if count == 1 {
                    vec![0.5 * (lo + hi)]
                } else {
                    (0..count)
                        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
                        .collect()
                }
            })
            .collect();
        let total: usize = per_dim.iter().product();
        let mut points = Vec::with_capacity(total);
        let mut idx = vec![0usize; self.dim()];
        loop {
            points.push(idx.iter().enumerate().map(|(d, &i)| axes[d][i]).collect::<Vec<f64>>());
            let mut d = self.dim();
            loop {
                if d == 0 {
                    return Ok(points);
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < per_dim[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
    }
}

/// The assembled system at one parameter value.
pub struct Assembled {
    pub operator: Operator,
    pub target: DVector<f64>,
}

/// A family of problems `L_nu u = f_nu` over a common pair of spaces.
///
/// Implementations must be pure in `nu`; assembly at distinct parameters
/// may run concurrently.
pub trait ProblemFamily: Send + Sync {
    fn space_x(&self) -> &Arc<Space>;
    fn space_y(&self) -> &Arc<Space>;
    fn nu_box(&self) -> &NuBox;
    fn eps(&self) -> f64;
    fn assemble(&self, nu: &[f64]) -> Result<Assembled>;
}

/// Closure-backed family, mainly for synthetic test instances.
pub struct CustomFamily<F>
where
    F: Fn(&[f64]) -> Result<(DMatrix<f64>, DVector<f64>)> + Send + Sync,
{
    space_x: Arc<Space>,
    space_y: Arc<Space>,
    nu_box: NuBox,
    eps: f64,
    assembler: F,
}

impl<F> CustomFamily<F>
where
    F: Fn(&[f64]) -> Result<(DMatrix<f64>, DVector<f64>)> + Send + Sync,
{
    pub fn new(
        space_x: Arc<Space>,
        space_y: Arc<Space>,
        nu_box: NuBox,
        eps: f64,
        assembler: F,
    ) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidProblem(format!("eps must be positive, got {eps}")));
        }
        Ok(Self { space_x, space_y, nu_box, eps, assembler })
    }
}

impl<F> ProblemFamily for CustomFamily<F>
where
    F: Fn(&[f64]) -> Result<(DMatrix<f64>, DVector<f64>)> + Send + Sync,
{
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
        if !self.nu_box.contains(nu) {
            return Err(Error::OutOfBox(nu.to_vec()));
        }
        let (matrix, target) = (self.assembler)(nu)?;
        let operator = Operator::new(matrix, Arc::clone(&self.space_x), Arc::clone(&self.space_y))?;
        Ok(Assembled { operator, target })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_covers_box_endpoints() {
        let b = NuBox::new(vec![(0.0, 1.0), (2.0, 4.0)]).unwrap();
        let g = b.grid(&[3, 2]).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g[0], vec![0.0, 2.0]);
        assert_eq!(g[5], vec![1.0, 4.0]);
        assert!(g.iter().all(|p| b.contains(p)));
    }

    #[test]
    fn contains_rejects_outside() {
        let b = NuBox::new(vec![(0.0, 1.0)]).unwrap();
        assert!(b.contains(&[0.5]));
        assert!(!b.contains(&[1.5]));
        assert!(!b.contains(&[0.5, 0.5]));
    }

    #[test]
    fn single_point_grid_uses_midpoint() {
        let b = NuBox::new(vec![(0.0, 1.0)]).unwrap();
        let g = b.grid(&[1]).unwrap();
        assert_eq!(g, vec![vec![0.5]]);
    }
}

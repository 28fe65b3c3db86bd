//! Linear solves shared by the potential-theoretic routines.

use nalgebra::DMatrix;

use crate::chain::Chain;
use crate::error::{Error, Result};
use crate::tolerance::config;

/// Solves `a x = b` by partial-pivoting LU with one step of iterative refinement.
pub fn lu_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let lu = a.clone().lu();
    let mut x = lu
        .solve(b)
        .ok_or_else(|| Error::SolverFailure("singular matrix in LU solve".into()))?;
    let r = b - a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolverFailure("non-finite LU solution".into()));
    }
    Ok(x)
}

/// The operator `-L` restricted to the states outside a boundary set, i.e. the
/// matrix of a Dirichlet problem with the boundary values moved to the right-hand side.
pub struct InteriorSystem<'a> {
    chain: &'a Chain,
    interior: Vec<usize>,
    position: Vec<Option<usize>>,
    dense: Option<DMatrix<f64>>,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl<'a> InteriorSystem<'a> {
    pub fn new(chain: &'a Chain, boundary: &[bool]) -> Self {
        let interior: Vec<usize> = (0..chain.len()).filter(|&i| !boundary[i]).collect();
        let mut position = vec![None; chain.len()];
        for (p, &i) in interior.iter().enumerate() {
            position[i] = Some(p);
        }
        let m = interior.len();
        let (dense, lu) = if m > 0 && m <= config().dense_limit {
            let mut a = DMatrix::zeros(m, m);
            for (p, &i) in interior.iter().enumerate() {
                a[(p, p)] = chain.holding_rate(i);
                for &(j, r) in chain.out_edges(i) {
                    if let Some(q) = position[j] {
                        a[(p, q)] -= r;
                    }
                }
            }
            let lu = a.clone().lu();
            (Some(a), Some(lu))
        } else {
            (None, None)
        };
        Self {
            chain,
            interior,
            position,
            dense,
            lu,
        }
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn position(&self, state: usize) -> Option<usize> {
        self.position[state]
    }

    /// Solves for several right-hand sides, each indexed by interior position.
    pub fn solve(&self, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let m = self.interior.len();
        if m == 0 {
            return Ok(rhs.iter().map(|_| Vec::new()).collect());
        }
        match (&self.dense, &self.lu) {
            (Some(a), Some(lu)) => {
                let b = DMatrix::from_fn(m, rhs.len(), |p, c| rhs[c][p]);
                let mut x = lu
                    .solve(&b)
                    .ok_or_else(|| Error::SolverFailure("singular Dirichlet system".into()))?;
                let r = &b - a * &x;
                if let Some(dx) = lu.solve(&r) {
                    x += dx;
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::SolverFailure("non-finite Dirichlet solution".into()));
                }
                Ok((0..rhs.len())
                    .map(|c| x.column(c).iter().copied().collect())
                    .collect())
            }
            _ => rhs.iter().map(|b| self.gauss_seidel(b)).collect(),
        }
    }

    fn gauss_seidel(&self, b: &[f64]) -> Result<Vec<f64>> {
        let m = self.interior.len();
        let mut x = vec![0.0; m];
        for _sweep in 0..1_000_000 {
            let mut change = 0.0f64;
            let mut scale = 0.0f64;
            for (p, &i) in self.interior.iter().enumerate() {
                let mut s = b[p];
                for &(j, r) in self.chain.out_edges(i) {
                    if let Some(q) = self.position[j] {
                        s += r * x[q];
                    }
                }
                let v = s / self.chain.holding_rate(i);
                change = change.max((v - x[p]).abs());
                scale = scale.max(v.abs());
                x[p] = v;
            }
            if change <= 1e-15 * scale.max(f64::MIN_POSITIVE) {
                return Ok(x);
            }
        }
        Err(Error::SolverFailure("Gauss-Seidel did not converge".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solve_small_system() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let b = DMatrix::from_row_slice(2, 1, &[3.0, 5.0]);
        let x = lu_solve(&a, &b).unwrap();
        assert!((x[(0, 0)] - 0.8).abs() < 1e-14);
        assert!((x[(1, 0)] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn lu_solve_reports_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        assert!(matches!(lu_solve(&a, &b), Err(Error::SolverFailure(_))));
    }
}

//! Discrete-time algebraic Riccati equation by fixed-point iteration.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DareError {
    #[error("inconsistent DARE dimensions: {0}")]
    Dimension(String),
    #[error("R + B'PB became singular")]
    Singular,
    #[error("Riccati iteration did not converge in {iterations} iterations (last change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DareInputs {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl DareInputs {
    fn validate(&self) -> Result<(), DareError> {
        let n = self.a.nrows();
        let k = self.b.ncols();
        if self.a.ncols() != n || self.b.nrows() != n {
            return Err(DareError::Dimension("A must be n×n and B n×k".into()));
        }
        if self.q.shape() != (n, n) || self.r.shape() != (k, k) {
            return Err(DareError::Dimension("Q must be n×n and R k×k".into()));
        }
        Ok(())
    }

    /// One Riccati map `Q + A'PA - A'PB (R + B'PB)⁻¹ B'PA`.
    fn riccati_map(&self, p: &DMatrix<f64>) -> Result<DMatrix<f64>, DareError> {
        let at = self.a.transpose();
        let pb = p * &self.b;
        let gain = (&self.r + self.b.transpose() * &pb)
            .try_inverse()
            .ok_or(DareError::Singular)?;
        let atpb = &at * &pb;
        let next = &self.q + &at * p * &self.a - &atpb * gain * atpb.transpose();
        Ok((&next + next.transpose()) * 0.5)
    }
}

/// Iterate `P ← Q + A'PA - A'PB(R + B'PB)⁻¹B'PA` from `P = Q` until consecutive iterates differ
/// by at most `tol` in the max-norm.
pub fn solve_dare(d: &DareInputs, tol: f64, max_iter: usize) -> Result<DMatrix<f64>, DareError> {
    d.validate()?;
    let mut p = d.q.clone();
    let mut change = f64::INFINITY;
    for _ in 0..max_iter {
        let next = d.riccati_map(&p)?;
        change = (&next - &p).amax();
        p = next;
        if change <= tol {
            return Ok(p);
        }
    }
    Err(DareError::NoConvergence {
        iterations: max_iter,
        change,
    })
}

/// Max-norm of `A'PA - P - A'PB(R + B'PB)⁻¹B'PA + Q`.
pub fn dare_residual(d: &DareInputs, p: &DMatrix<f64>) -> Result<f64, DareError> {
    d.validate()?;
    Ok((d.riccati_map(p)? - p).amax())
}

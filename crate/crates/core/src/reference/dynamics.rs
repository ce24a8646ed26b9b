//! Right-hand-side abstractions for the truth integrator and the
//! linearizing filters.

use nalgebra::{DMatrix, DVector};

use super::ReferenceError;
use crate::crtbp::{full_jacobian, full_rhs};

/// A continuous-time vector field `dx/dt = f(t, x)`.
///
/// `Sync` so Monte Carlo runs can share one instance across threads.
pub trait Dynamics: Sync {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, state: &[f64]) -> Result<DVector<f64>, ReferenceError>;
}

/// Dynamics with an analytic Jacobian, as the EKF and IKF require for their
/// variational (state-transition matrix) propagation.
pub trait DifferentiableDynamics: Dynamics {
    fn jacobian(&self, t: f64, state: &[f64]) -> Result<DMatrix<f64>, ReferenceError>;
}

/// The full (untruncated) rotating-frame restricted three-body equations.
#[derive(Debug, Clone, Copy)]
pub struct CrtbpDynamics {
    mu: f64,
}

impl CrtbpDynamics {
    pub fn new(mu: f64) -> Self {
        Self { mu }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

impl Dynamics for CrtbpDynamics {
    fn dim(&self) -> usize {
        6
    }

    fn rhs(&self, _t: f64, state: &[f64]) -> Result<DVector<f64>, ReferenceError> {
        let dot = full_rhs(state, self.mu)?;
        Ok(DVector::from_column_slice(&dot))
    }
}

impl DifferentiableDynamics for CrtbpDynamics {
    fn jacobian(&self, _t: f64, state: &[f64]) -> Result<DMatrix<f64>, ReferenceError> {
        Ok(full_jacobian(state, self.mu)?)
    }
}

/// Time-invariant linear dynamics `dx/dt = M x`, mostly for validating the
/// filters against closed-form Kalman solutions.
#[derive(Debug, Clone)]
pub struct LinearDynamics {
    m: DMatrix<f64>,
}

impl LinearDynamics {
    pub fn new(m: DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "system matrix must be square");
        Self { m }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }
}

impl Dynamics for LinearDynamics {
    fn dim(&self) -> usize {
        self.m.nrows()
    }

    fn rhs(&self, _t: f64, state: &[f64]) -> Result<DVector<f64>, ReferenceError> {
        if state.len() != self.m.ncols() {
            return Err(ReferenceError::DimensionMismatch {
                expected: self.m.ncols(),
                got: state.len(),
            });
        }
        Ok(&self.m * DVector::from_column_slice(state))
    }
}

impl DifferentiableDynamics for LinearDynamics {
    fn jacobian(&self, _t: f64, state: &[f64]) -> Result<DMatrix<f64>, ReferenceError> {
        if state.len() != self.m.ncols() {
            return Err(ReferenceError::DimensionMismatch {
                expected: self.m.ncols(),
                got: state.len(),
            });
        }
        Ok(self.m.clone())
    }
}

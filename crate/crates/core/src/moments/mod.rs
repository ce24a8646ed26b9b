//! Gaussian moment machinery: closed-form central moments of arbitrary
//! order via the pairing recursion, expectations of polynomials under a
//! Gaussian, and propagation of central moments through polynomial flow
//! maps.
//!
//! The engine works entirely on zero-mean deviations: a flow polynomial in
//! `dx` centered at the belief mean turns propagation into a sequence of
//! polynomial expectations, each of which reduces to covariance pairings.

mod gaussian;
mod isserlis;
mod propagate;

pub use gaussian::GaussianBelief;
pub use isserlis::{expect_polynomial, isserlis_moment, MomentEngine, DEFAULT_ORDER_CAP};
pub use propagate::{propagate_moments, CentralMomentSet, Tensor3, Tensor4};

use crate::poly::PolyError;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum MomentError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("moment order {order} exceeds cap {cap}")]
    OrderCap { order: u32, cap: u32 },
    #[error("covariance is not symmetric: max asymmetry {max_asym:.3e}")]
    NotSymmetric { max_asym: f64 },
    #[error("covariance is not positive semi-definite: min eigenvalue {min_eigenvalue:.3e} is below floor {floor:.3e}")]
    NotPositiveSemiDefinite { min_eigenvalue: f64, floor: f64 },
    #[error("unsupported moment order psi = {psi}: expected 2, 3, or 4")]
    UnsupportedPsi { psi: u32 },
    #[error("dimension {dim} exceeds the moment engine limit {limit}")]
    DimensionTooLarge { dim: usize, limit: usize },
    #[error("input contains non-finite values")]
    NonFinite,
}

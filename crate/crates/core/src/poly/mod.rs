//! Sparse multivariate polynomials over `Complex64` and orthonormal Legendre
//! bases on box domains.
//!
//! The basis spans all products of normalized univariate Legendre polynomials
//! up to a total degree bound. Inner products are exact: either term-by-term
//! monomial integration or tensor Gauss-Legendre quadrature of sufficient
//! order. Both routes are kept available so one can check the other.
//!
//! Internally every basis quantity lives on the unit cube `[-1,1]^d`; the
//! affine map to a state-space box is applied once on the way in and inverted
//! on the way out. This keeps coefficient magnitudes O(1) even for boxes a
//! few 1e-2 wide, where raw monomial assembly loses most of the mantissa.

mod basis;
mod domain;
mod legendre;
mod multi_index;
mod polynomial;
mod quadrature;

pub use basis::{inner_product, inner_product_quadrature, legendre_poly, project, BasisSet};
pub use domain::Domain;
pub use legendre::{gauss_legendre, legendre_monomial_coeffs, normalized_legendre_coeffs};
pub use multi_index::{graded_indices, MultiIndex};
pub use polynomial::Polynomial;
pub use quadrature::tensor_quadrature;

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("multi-index {0:?} is outside the basis")]
    IndexOutsideBasis(Vec<u32>),
    #[error("polynomial has non-negligible imaginary part: residual {residual:.3e} exceeds {tol:.3e}")]
    ImaginaryResidual { residual: f64, tol: f64 },
    #[error("degree {degree} exceeds supported limit {limit}")]
    DegreeTooLarge { degree: u32, limit: u32 },
}

//! Galerkin approximation of the Koopman generator on a Legendre basis and
//! the spectral flow polynomials it induces.
//!
//! For a polynomial vector field `f` and basis functions `L_i`, the matrix
//! entry `K[i][j] = <grad L_i . f, L_j>` collects the action of the
//! generator; left eigenvectors `C` with `C K = Lambda C` then give the
//! spectral flow of any observable with basis coefficients `A`:
//!
//! ```text
//! g(x(t)) ~= A C^-1 exp(Lambda t) C L(x(0))
//! ```
//!
//! which is a polynomial in the initial state once `t` is fixed. This is the
//! whole trick: the time dependence sits in scalar exponentials, so one
//! matrix build amortizes over every propagation interval and center.

mod field;
mod flow;
mod model;

pub use field::VectorField;
pub use flow::{flow_polynomial, shifted_flow, ObservableSet};
pub use model::{build_koopman_matrix, eigendecompose, KoopmanModel, SpectralDecomposition};

use crate::poly::PolyError;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum KoopmanError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("observable degree {degree} exceeds basis max degree {max_degree}")]
    ObservableDegree { degree: u32, max_degree: u32 },
    #[error("eigenvector matrix condition {cond:.3e} exceeds {limit:.3e}: matrix is not diagonalizable within tolerance")]
    NonDiagonalizable { cond: f64, limit: f64 },
    #[error("eigendecomposition did not converge")]
    EigenFailed,
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("exp(lambda t) overflows: max |Re(lambda)|*t = {exponent:.3e}")]
    ExpOverflow { exponent: f64 },
    #[error("expansion center lies outside the basis domain")]
    CenterOutsideDomain,
    #[error("unsupported model artifact version {got} (expected {expected})")]
    ArtifactVersion { got: u32, expected: u32 },
    #[error("malformed model artifact: {0}")]
    ArtifactFormat(String),
}

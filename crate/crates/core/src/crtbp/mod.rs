//! Circular restricted three-body dynamics around a collinear libration
//! point, in every representation the propagation pipeline needs:
//!
//! * the full nonlinear rotating-frame equations (`full_rhs`) as the truth
//!   model, with the Jacobi constant and the analytic Jacobian;
//! * the libration-centered, distance-scaled polynomial expansion of the same
//!   dynamics (`polynomial_eom`), built from solid Legendre terms;
//! * the linear normal form (`hamiltonian_normal_form`): a symplectic change
//!   of variables plus a complexification that diagonalizes the linearized
//!   motion, giving the complex-coefficient Hamiltonian vector field the
//!   spectral propagator consumes;
//! * the same change of variables stopped at its real stage
//!   (`real_modal_form`), where the linearization is block-diagonal and every
//!   coefficient stays real — the frame the filtering pipeline builds its
//!   spectral models in;
//! * the affine maps between all of those frames (`frames`).

mod eom;
mod frames;
mod legendre;
mod normal_form;
mod params;
mod physical;

pub use eom::polynomial_eom;
pub use frames::{
    canonical_to_libration, libration_to_canonical, libration_to_physical, physical_to_libration,
    ComplexAffine,
};
pub use legendre::solid_legendre;
pub use normal_form::{hamiltonian_normal_form, real_modal_form, NormalFormModel, RealModalModel};
pub use params::{cn_coefficients, solve_euler_quintic, CrtbpParams, LibrationPoint};
pub use physical::{full_jacobian, full_rhs, jacobi_constant, COLLISION_RADIUS};

use crate::koopman::KoopmanError;
use crate::poly::PolyError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CrtbpError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Koopman(#[from] KoopmanError),
    #[error("mass ratio {mu} outside (0, 1/2)")]
    InvalidMassRatio { mu: f64 },
    #[error("expansion order {order} below the quadratic minimum of 2")]
    InvalidOrder { order: u32 },
    #[error("no root of the collinear-point quintic bracketed in (0, 1)")]
    NoRootBracketed,
    #[error("quintic solve stalled at residual {residual:e}")]
    QuinticNotConverged { residual: f64 },
    #[error("degenerate libration-point linearization (9 c2^2 - 8 c2 = {discriminant})")]
    InvalidRegime { discriminant: f64 },
    #[error("state within {distance:e} of a primary")]
    Collision { distance: f64 },
    #[error("coordinate map is not real: imaginary magnitude {residual:e}")]
    ComplexResidual { residual: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value encountered")]
    NonFinite,
}

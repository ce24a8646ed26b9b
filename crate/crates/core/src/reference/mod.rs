//! Classical baselines the spectral filter is judged against.
//!
//! Everything here deliberately avoids the Koopman machinery: truth
//! trajectories come from a high-order adaptive Runge–Kutta integrator on
//! the raw equations of motion, and the comparison filters (EKF, IKF, UKF)
//! linearize or sample those equations directly. The [`monte_carlo`] harness
//! then runs any of the filters — including the spectral one — against
//! synthetic truth so their error statistics can be compared on equal
//! footing.
//!
//! - [`dynamics`](self) — right-hand-side traits plus the restricted
//!   three-body and linear implementations.
//! - [`rk78_integrate`] — Runge–Kutta–Fehlberg 7(8) with step control.
//! - [`ekf_step`] / [`ikf_step`] / [`ukf_step`] — the benchmark filters.
//! - [`monte_carlo`] — seeded, reproducible multi-run experiments and their
//!   summary statistics.

mod dynamics;
mod filters;
mod monte_carlo;
mod rk78;
mod stats;

pub use dynamics::{CrtbpDynamics, DifferentiableDynamics, Dynamics, LinearDynamics};
pub use filters::{ekf_predict, ekf_step, ikf_step, ukf_step, IkfConfig, UkfConfig};
pub use monte_carlo::{monte_carlo, EpochSpec, FilterMethod, FilterProblem};
pub use rk78::{rk78_integrate, IntegratorConfig, Trajectory};
pub use stats::{sample_stats, MCReport, SampleStats};

use crate::crtbp::CrtbpError;
use crate::kof::KofError;
use crate::moments::MomentError;

/// Errors from the baseline integrator, filters, and Monte Carlo harness.
#[derive(Debug, thiserror::Error)]
pub enum ReferenceError {
    /// The step controller collapsed the step without meeting the tolerance.
    #[error("integrator stalled at t = {t} with step {step:e}; dynamics appear stiff or singular")]
    Stiffness { t: f64, step: f64 },
    #[error(transparent)]
    Crtbp(#[from] CrtbpError),
    #[error(transparent)]
    Kof(#[from] KofError),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error("innovation covariance is not positive definite")]
    SingularInnovation,
    #[error("covariance is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("epochs must be finite, strictly increasing, and not precede the start time")]
    BadEpochs,
    #[error("too few successful runs ({runs}) for sample statistics")]
    TooFewRuns { runs: usize },
    #[error("the spectral filter method needs a kof configuration in the problem")]
    MissingKofConfig,
    #[error("non-finite value encountered")]
    NonFinite,
}

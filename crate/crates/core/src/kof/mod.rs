//! Kalman-structured filtering on top of the spectral flow: the prediction
//! step propagates the belief through the flow polynomials and Isserlis
//! moments, the measurement step Taylor-expands the sensor model at the
//! predicted center and flows it through the same spectral map, and the
//! update applies the minimum-mean-square-error gain.

mod filter;
mod measurement;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::koopman::KoopmanError;
use crate::moments::MomentError;
use crate::poly::PolyError;

pub use filter::{
    measurement_polynomial, predict, propagate_belief, run_filter, update, Epoch, FilterStep,
    FrameMap, KofConfig, Prediction,
};
pub use measurement::{
    AzElMeasurement, LinearMeasurement, MeasurementMap, MeasurementModel, ARCSEC,
};

#[derive(Debug, Error)]
pub enum KofError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Koopman(#[from] KoopmanError),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("covariance not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("measurement undefined at the expansion point")]
    ExpansionPoint,
    #[error("unsupported measurement expansion order {order}")]
    TaylorOrder { order: u32 },
    #[error("epochs must be finite and strictly increasing")]
    EpochOrder,
    #[error("frame maps are not inverses (residual {residual:e})")]
    FrameInconsistent { residual: f64 },
    #[error("non-finite value encountered")]
    NonFinite,
}

/// Posterior summary at one epoch: time, estimate, covariance.
#[derive(Debug, Clone)]
pub struct FilterState {
    t: f64,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl FilterState {
    /// The covariance is symmetrized on entry; asymmetry beyond 1e-8 of its
    /// scale is rejected rather than silently averaged away.
    pub fn new(t: f64, mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self, KofError> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(KofError::DimensionMismatch { expected: d, got: covariance.nrows() });
        }
        if !t.is_finite()
            || mean.iter().any(|v| !v.is_finite())
            || covariance.iter().any(|v| !v.is_finite())
        {
            return Err(KofError::NonFinite);
        }
        let scale = covariance.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1e-300);
        let asym = (&covariance - covariance.transpose())
            .iter()
            .fold(0.0_f64, |a, v| a.max(v.abs()));
        if asym > 1e-8 * scale {
            return Err(KofError::NotPsd { min_eig: -asym });
        }
        let covariance = (&covariance + covariance.transpose()) * 0.5;
        Ok(FilterState { t, mean, covariance })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Per-axis standard deviations from the covariance diagonal.
    pub fn sigma(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.mean.len(),
            (0..self.mean.len()).map(|i| self.covariance[(i, i)].max(0.0).sqrt()),
        )
    }
}

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::MomentError;

/// Mean and covariance of a Gaussian state estimate. The stored covariance
/// is the symmetrization of the input, which must already be symmetric to
/// 1e-12 (relative) and have eigenvalues above `-1e-10 * trace`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BeliefRepr", into = "BeliefRepr")]
pub struct GaussianBelief {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self, MomentError> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(MomentError::DimensionMismatch {
                expected: d,
                got: covariance.nrows().max(covariance.ncols()),
            });
        }
        if !mean.iter().all(|v| v.is_finite()) {
            return Err(MomentError::NonFinite);
        }
        validate_covariance(&covariance)?;
        Ok(GaussianBelief {
            mean,
            covariance: symmetrized(&covariance),
        })
    }

    /// `N(mean, sigma^2 I)`.
    pub fn isotropic(mean: DVector<f64>, sigma: f64) -> Result<Self, MomentError> {
        let d = mean.len();
        Self::new(mean, DMatrix::identity(d, d) * (sigma * sigma))
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
}

pub(crate) fn symmetrized(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

pub(crate) fn validate_covariance(p: &DMatrix<f64>) -> Result<(), MomentError> {
    if !p.iter().all(|v| v.is_finite()) {
        return Err(MomentError::NonFinite);
    }
    let d = p.nrows();
    let max_abs = p.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let mut max_asym = 0.0f64;
    for i in 0..d {
        for j in (i + 1)..d {
            max_asym = max_asym.max((p[(i, j)] - p[(j, i)]).abs());
        }
    }
    if max_asym > 1e-12 * max_abs.max(1.0) {
        return Err(MomentError::NotSymmetric { max_asym });
    }
    let sym = symmetrized(p);
    let eigenvalues = sym.clone().symmetric_eigen().eigenvalues;
    let min_eigenvalue = eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    let floor = -1e-10 * sym.trace();
    if min_eigenvalue < floor {
        return Err(MomentError::NotPositiveSemiDefinite {
            min_eigenvalue,
            floor,
        });
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct BeliefRepr {
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

impl TryFrom<BeliefRepr> for GaussianBelief {
    type Error = MomentError;

    fn try_from(repr: BeliefRepr) -> Result<Self, Self::Error> {
        let d = repr.mean.len();
        if repr.covariance.len() != d || repr.covariance.iter().any(|row| row.len() != d) {
            return Err(MomentError::DimensionMismatch {
                expected: d,
                got: repr.covariance.len(),
            });
        }
        let covariance = DMatrix::from_fn(d, d, |i, j| repr.covariance[i][j]);
        Self::new(DVector::from_vec(repr.mean), covariance)
    }
}

impl From<GaussianBelief> for BeliefRepr {
    fn from(b: GaussianBelief) -> Self {
        let d = b.dim();
        BeliefRepr {
            mean: b.mean.iter().copied().collect(),
            covariance: (0..d)
                .map(|i| (0..d).map(|j| b.covariance[(i, j)]).collect())
                .collect(),
        }
    }
}

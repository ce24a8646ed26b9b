use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::params::CrtbpParams;
use super::CrtbpError;
use crate::poly::Polynomial;

/// Affine coordinate map `s -> A s + b` over complex states, the common
/// currency for the frame chain physical → libration → canonical → normal.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexAffine {
    a: DMatrix<Complex64>,
    b: DVector<Complex64>,
}

impl ComplexAffine {
    pub fn new(a: DMatrix<Complex64>, b: DVector<Complex64>) -> Self {
        assert_eq!(a.nrows(), b.len(), "offset length != output dimension");
        ComplexAffine { a, b }
    }

    pub fn from_linear(a: DMatrix<Complex64>) -> Self {
        let b = DVector::from_element(a.nrows(), Complex64::new(0.0, 0.0));
        ComplexAffine::new(a, b)
    }

    pub fn from_real(a: &DMatrix<f64>, b: &DVector<f64>) -> Self {
        ComplexAffine::new(a.map(|v| Complex64::new(v, 0.0)), b.map(|v| Complex64::new(v, 0.0)))
    }

    pub fn input_dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.a
    }

    pub fn offset(&self) -> &DVector<Complex64> {
        &self.b
    }

    pub fn apply(&self, s: &[Complex64]) -> Result<DVector<Complex64>, CrtbpError> {
        if s.len() != self.input_dim() {
            return Err(CrtbpError::DimensionMismatch {
                expected: self.input_dim(),
                got: s.len(),
            });
        }
        let v = DVector::from_column_slice(s);
        Ok(&self.a * v + &self.b)
    }

    pub fn apply_real(&self, s: &[f64]) -> Result<DVector<Complex64>, CrtbpError> {
        let z: Vec<Complex64> = s.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.apply(&z)
    }

    /// `self ∘ inner`: the map that first applies `inner`.
    pub fn compose(&self, inner: &ComplexAffine) -> ComplexAffine {
        assert_eq!(
            self.input_dim(),
            inner.output_dim(),
            "composition dimension mismatch"
        );
        ComplexAffine {
            a: &self.a * &inner.a,
            b: &self.a * &inner.b + &self.b,
        }
    }

    /// Expresses an observable of the output frame in input coordinates:
    /// `p ∘ self`.
    pub fn pull_back(&self, p: &Polynomial) -> Polynomial {
        p.compose_affine(&self.a, &self.b)
    }

    /// Largest imaginary magnitude over the matrix and offset.
    pub fn imag_magnitude(&self) -> f64 {
        self.a
            .iter()
            .chain(self.b.iter())
            .fold(0.0_f64, |acc, v| acc.max(v.im.abs()))
    }

    /// Congruence transform `A P A^T` of a real covariance; the map must be
    /// real for this to be meaningful.
    pub fn transform_covariance(&self, p: &DMatrix<f64>) -> Result<DMatrix<f64>, CrtbpError> {
        if p.nrows() != self.input_dim() || p.ncols() != self.input_dim() {
            return Err(CrtbpError::DimensionMismatch {
                expected: self.input_dim(),
                got: p.nrows(),
            });
        }
        let scale = self
            .a
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.norm()))
            .max(1.0);
        let residual = self.imag_magnitude();
        if residual > 1e-12 * scale {
            return Err(CrtbpError::ComplexResidual { residual });
        }
        let a_re = self.a.map(|v| v.re);
        Ok(&a_re * p * a_re.transpose())
    }
}

/// Barycentric physical state → libration-centered state with positions and
/// velocities scaled by `gamma` (time is untouched, so the rotation rate
/// stays 1).
pub fn physical_to_libration(params: &CrtbpParams) -> ComplexAffine {
    let g = params.gamma();
    let a = DMatrix::from_diagonal_element(6, 6, 1.0 / g);
    let mut b = DVector::zeros(6);
    b[0] = -params.libration_x() / g;
    ComplexAffine::from_real(&a, &b)
}

pub fn libration_to_physical(params: &CrtbpParams) -> ComplexAffine {
    let g = params.gamma();
    let a = DMatrix::from_diagonal_element(6, 6, g);
    let mut b = DVector::zeros(6);
    b[0] = params.libration_x();
    ComplexAffine::from_real(&a, &b)
}

/// `(x, y, z, vx, vy, vz) → (x, y, z, px, py, pz)` with the rotating-frame
/// pseudo momenta `px = vx - y`, `py = vy + x`, `pz = vz`.
pub fn libration_to_canonical() -> ComplexAffine {
    let mut a = DMatrix::identity(6, 6);
    a[(3, 1)] = -1.0;
    a[(4, 0)] = 1.0;
    ComplexAffine::from_real(&a, &DVector::zeros(6))
}

pub fn canonical_to_libration() -> ComplexAffine {
    let mut a = DMatrix::identity(6, 6);
    a[(3, 1)] = 1.0;
    a[(4, 0)] = -1.0;
    ComplexAffine::from_real(&a, &DVector::zeros(6))
}

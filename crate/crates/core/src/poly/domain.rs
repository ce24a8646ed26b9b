use super::PolyError;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Axis-aligned box domain for the basis, `lower[i] < upper[i]` on every axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, PolyError> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(PolyError::InvalidDomain(format!(
                "bound lengths {} and {} must match and be nonzero",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(PolyError::InvalidDomain(format!(
                    "axis {i}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Domain { lower, upper })
    }

    /// `[-1, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        Domain {
            lower: vec![-1.0; dim],
            upper: vec![1.0; dim],
        }
    }

    /// `[-w_i, w_i]` per axis.
    pub fn symmetric(half_widths: &[f64]) -> Result<Self, PolyError> {
        Domain::new(
            half_widths.iter().map(|w| -w).collect(),
            half_widths.to_vec(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn center(&self, axis: usize) -> f64 {
        0.5 * (self.lower[axis] + self.upper[axis])
    }

    pub fn half_width(&self, axis: usize) -> f64 {
        0.5 * (self.upper[axis] - self.lower[axis])
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .product()
    }

    /// Jacobian factor of `x -> u`: `dx = volume_factor * du` on the unit cube.
    pub fn volume_factor(&self) -> f64 {
        (0..self.dim()).map(|i| self.half_width(i)).product()
    }

    /// Membership with a relative boundary slack per axis.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().enumerate().all(|(i, &v)| {
                let eps = 1e-12 * self.half_width(i).max(1.0);
                v >= self.lower[i] - eps && v <= self.upper[i] + eps
            })
    }

    /// Membership for complexified states: the real part must lie in the box
    /// and the imaginary part within the half-width around zero.
    pub fn contains_complex(&self, x: &[Complex64]) -> bool {
        x.len() == self.dim()
            && x.iter().enumerate().all(|(i, v)| {
                let eps = 1e-12 * self.half_width(i).max(1.0);
                v.re >= self.lower[i] - eps
                    && v.re <= self.upper[i] + eps
                    && v.im.abs() <= self.half_width(i) + eps
            })
    }

    /// Maps a state point into unit-cube coordinates.
    pub fn to_unit_point(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.dim());
        (0..self.dim())
            .map(|i| (x[i] - self.center(i)) / self.half_width(i))
            .collect()
    }

    /// Affine map `u -> x = c + H u` as (matrix, offset); composing a
    /// unit-cube polynomial with it yields its state-coordinate form.
    pub fn unit_to_state_affine(&self) -> (DMatrix<Complex64>, DVector<Complex64>) {
        let d = self.dim();
        let mut a = DMatrix::zeros(d, d);
        let mut b = DVector::zeros(d);
        for i in 0..d {
            a[(i, i)] = Complex64::new(self.half_width(i), 0.0);
            b[i] = Complex64::new(self.center(i), 0.0);
        }
        (a, b)
    }

    /// Affine map `x -> u = (x - c)/H` as (matrix, offset).
    pub fn state_to_unit_affine(&self) -> (DMatrix<Complex64>, DVector<Complex64>) {
        let d = self.dim();
        let mut a = DMatrix::zeros(d, d);
        let mut b = DVector::zeros(d);
        for i in 0..d {
            let h = self.half_width(i);
            a[(i, i)] = Complex64::new(1.0 / h, 0.0);
            b[i] = Complex64::new(-self.center(i) / h, 0.0);
        }
        (a, b)
    }

    /// Exact `int_lower^upper x^p dx` on one axis.
    pub fn monomial_integral(&self, axis: usize, p: u32) -> f64 {
        let lo = self.lower[axis];
        let hi = self.upper[axis];
        let k = p as i32 + 1;
        (hi.powi(k) - lo.powi(k)) / k as f64
    }
}

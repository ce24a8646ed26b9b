use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::KoopmanError;
use crate::poly::{Domain, Polynomial};

/// Polynomial vector field `dx/dt = f(x)`: one component polynomial per
/// state coordinate, plus the box on which the model is taken to be valid
/// (expansions of non-polynomial dynamics are only trustworthy there).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FieldRepr", into = "FieldRepr")]
pub struct VectorField {
    components: Vec<Polynomial>,
    domain: Domain,
}

#[derive(Serialize, Deserialize)]
struct FieldRepr {
    components: Vec<Polynomial>,
    domain: Domain,
}

impl VectorField {
    pub fn new(components: Vec<Polynomial>, domain: Domain) -> Result<Self, KoopmanError> {
        let dim = components.len();
        if dim == 0 {
            return Err(KoopmanError::DimensionMismatch { expected: 1, got: 0 });
        }
        if domain.dim() != dim {
            return Err(KoopmanError::DimensionMismatch { expected: dim, got: domain.dim() });
        }
        for c in &components {
            if c.dim() != dim {
                return Err(KoopmanError::DimensionMismatch { expected: dim, got: c.dim() });
            }
        }
        Ok(Self { components, domain })
    }

    /// Linear field `f(x) = M x`.
    pub fn linear(m: &nalgebra::DMatrix<f64>, domain: Domain) -> Result<Self, KoopmanError> {
        let dim = m.nrows();
        if m.ncols() != dim {
            return Err(KoopmanError::DimensionMismatch { expected: dim, got: m.ncols() });
        }
        let components = (0..dim)
            .map(|i| {
                let mut p = Polynomial::zero(dim);
                for j in 0..dim {
                    if m[(i, j)] != 0.0 {
                        p.axpy(
                            Complex64::new(m[(i, j)], 0.0),
                            &Polynomial::variable(dim, j),
                        );
                    }
                }
                p
            })
            .collect();
        Self::new(components, domain)
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn component(&self, i: usize) -> &Polynomial {
        &self.components[i]
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    /// Largest total degree over the components.
    pub fn degree(&self) -> u32 {
        self.components.iter().map(|c| c.degree()).max().unwrap_or(0)
    }

    /// Largest relative imaginary residual over the components; zero for a
    /// field with purely real coefficients.
    pub fn imag_residual(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.imag_residual())
            .fold(0.0, f64::max)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<DVector<f64>, KoopmanError> {
        let mut out = DVector::zeros(self.dim());
        for (i, c) in self.components.iter().enumerate() {
            let v = c.evaluate_real(x)?;
            out[i] = v.re;
        }
        Ok(out)
    }

    pub fn evaluate_complex(&self, x: &[Complex64]) -> Result<DVector<Complex64>, KoopmanError> {
        let mut out = DVector::from_element(self.dim(), Complex64::new(0.0, 0.0));
        for (i, c) in self.components.iter().enumerate() {
            out[i] = c.evaluate(x)?;
        }
        Ok(out)
    }
}

impl TryFrom<FieldRepr> for VectorField {
    type Error = KoopmanError;

    fn try_from(repr: FieldRepr) -> Result<Self, Self::Error> {
        Self::new(repr.components, repr.domain)
    }
}

impl From<VectorField> for FieldRepr {
    fn from(f: VectorField) -> Self {
        FieldRepr { components: f.components, domain: f.domain }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn linear_field_evaluates_as_matrix_product() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -0.5]);
        let f = VectorField::linear(&m, Domain::unit(2)).unwrap();
        let x = [0.3, -1.2];
        let fx = f.evaluate(&x).unwrap();
        let expected = &m * DVector::from_column_slice(&x);
        assert!((fx - expected).norm() < 1e-15);
        assert_eq!(f.degree(), 1);
        assert_eq!(f.imag_residual(), 0.0);
    }

    #[test]
    fn mismatched_component_dims_are_rejected() {
        let components = vec![Polynomial::zero(2), Polynomial::zero(3)];
        assert!(matches!(
            VectorField::new(components, Domain::unit(2)),
            Err(KoopmanError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn serde_round_trip() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let f = VectorField::linear(&m, Domain::symmetric(&[2.0, 3.0]).unwrap()).unwrap();
        let text = serde_json::to_string(&f).unwrap();
        let back: VectorField = serde_json::from_str(&text).unwrap();
        assert_eq!(f, back);
    }
}

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;

use super::KofError;
use crate::poly::Polynomial;

/// One arcsecond in radians.
pub const ARCSEC: f64 = std::f64::consts::PI / (180.0 * 3600.0);

/// A sensor model: exact channel evaluation for truth synthesis, the
/// Jacobian for linearizing filters, and a local polynomial expansion for
/// the spectral-flow measurement bridge.
pub trait MeasurementMap: Send + Sync {
    /// Length of the state vector the map acts on.
    fn state_dim(&self) -> usize;

    /// Number of measurement channels.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn eval(&self, x: &[f64]) -> Result<DVector<f64>, KofError>;

    /// `len() x state_dim()` matrix of partial derivatives at `x`.
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, KofError>;

    /// Per-channel polynomials in the deviation from `center`, truncated at
    /// total degree `order`.
    fn taylor(&self, center: &[f64], order: u32) -> Result<Vec<Polynomial>, KofError>;
}

/// `y = H x`, exact at every expansion order.
#[derive(Debug, Clone)]
pub struct LinearMeasurement {
    h: DMatrix<f64>,
}

impl LinearMeasurement {
    pub fn new(h: DMatrix<f64>) -> Self {
        LinearMeasurement { h }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }
}

impl MeasurementMap for LinearMeasurement {
    fn state_dim(&self) -> usize {
        self.h.ncols()
    }

    fn len(&self) -> usize {
        self.h.nrows()
    }

    fn eval(&self, x: &[f64]) -> Result<DVector<f64>, KofError> {
        check_state(x, self.state_dim())?;
        Ok(&self.h * DVector::from_column_slice(x))
    }

    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, KofError> {
        check_state(x, self.state_dim())?;
        Ok(self.h.clone())
    }

    fn taylor(&self, center: &[f64], order: u32) -> Result<Vec<Polynomial>, KofError> {
        if order < 1 {
            return Err(KofError::TaylorOrder { order });
        }
        let d = self.state_dim();
        let y0 = self.eval(center)?;
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let mut p = Polynomial::constant_re(d, y0[i]);
            for j in 0..d {
                p = p
                    .add(&Polynomial::variable(d, j).scale(Complex64::new(self.h[(i, j)], 0.0)))?;
            }
            out.push(p);
        }
        Ok(out)
    }
}

/// Azimuth and elevation of a 6-state position as seen from an observer at
/// `(offset_x, 0, 0)`:
///
/// ```text
/// az = atan(y / u),            u = x - offset_x
/// el = asin(z / r),            r = sqrt(u^2 + y^2 + z^2)
/// ```
///
/// The azimuth uses the principal arctangent branch, which is smooth
/// wherever `u` keeps its sign; velocity components never enter.
#[derive(Debug, Clone)]
pub struct AzElMeasurement {
    offset_x: f64,
}

impl AzElMeasurement {
    pub fn new(offset_x: f64) -> Self {
        AzElMeasurement { offset_x }
    }

    pub fn offset_x(&self) -> f64 {
        self.offset_x
    }

    /// `(u, y, z, rho^2, r^2)` with the degenerate line `rho ~ 0` rejected:
    /// both angles lose their derivatives there.
    fn geometry(&self, x: &[f64]) -> Result<(f64, f64, f64, f64, f64), KofError> {
        check_state(x, 6)?;
        let u = x[0] - self.offset_x;
        let y = x[1];
        let z = x[2];
        let rho2 = u * u + y * y;
        let r2 = rho2 + z * z;
        if rho2 <= 1e-24 * r2.max(1e-300) {
            return Err(KofError::ExpansionPoint);
        }
        Ok((u, y, z, rho2, r2))
    }
}

impl MeasurementMap for AzElMeasurement {
    fn state_dim(&self) -> usize {
        6
    }

    fn len(&self) -> usize {
        2
    }

    fn eval(&self, x: &[f64]) -> Result<DVector<f64>, KofError> {
        let (u, y, z, _, r2) = self.geometry(x)?;
        Ok(DVector::from_vec(vec![(y / u).atan(), (z / r2.sqrt()).asin()]))
    }

    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, KofError> {
        let (u, y, z, rho2, r2) = self.geometry(x)?;
        let rho = rho2.sqrt();
        let mut j = DMatrix::zeros(2, 6);
        j[(0, 0)] = -y / rho2;
        j[(0, 1)] = u / rho2;
        j[(1, 0)] = -u * z / (r2 * rho);
        j[(1, 1)] = -y * z / (r2 * rho);
        j[(1, 2)] = rho / r2;
        Ok(j)
    }

    fn taylor(&self, center: &[f64], order: u32) -> Result<Vec<Polynomial>, KofError> {
        if !(1..=2).contains(&order) {
            return Err(KofError::TaylorOrder { order });
        }
        let (u, y, z, rho2, r2) = self.geometry(center)?;
        let y0 = self.eval(center)?;
        let j = self.jacobian(center)?;

        // position-block Hessians
        let mut h_az = [[0.0; 3]; 3];
        let mut h_el = [[0.0; 3]; 3];
        if order == 2 {
            let d2 = rho2 * rho2;
            h_az[0][0] = 2.0 * u * y / d2;
            h_az[0][1] = (y * y - u * u) / d2;
            h_az[1][1] = -2.0 * u * y / d2;
            h_az[1][0] = h_az[0][1];

            let rho = rho2.sqrt();
            let r4 = r2 * r2;
            let rho3 = rho2 * rho;
            h_el[2][2] = -2.0 * rho * z / r4;
            h_el[0][2] = u * (z * z - rho2) / (rho * r4);
            h_el[1][2] = y * (z * z - rho2) / (rho * r4);
            h_el[0][0] = -z * (r2 * rho2 - u * u * (2.0 * rho2 + r2)) / (r4 * rho3);
            h_el[1][1] = -z * (r2 * rho2 - y * y * (2.0 * rho2 + r2)) / (r4 * rho3);
            h_el[0][1] = u * y * z * (2.0 * rho2 + r2) / (r4 * rho3);
            h_el[2][0] = h_el[0][2];
            h_el[2][1] = h_el[1][2];
            h_el[1][0] = h_el[0][1];
        }

        let mut out = Vec::with_capacity(2);
        for (ch, hess) in [h_az, h_el].iter().enumerate() {
            let mut terms: Vec<(Vec<u32>, Complex64)> = Vec::new();
            terms.push((vec![0; 6], Complex64::new(y0[ch], 0.0)));
            for a in 0..3 {
                let mut e = vec![0u32; 6];
                e[a] = 1;
                terms.push((e, Complex64::new(j[(ch, a)], 0.0)));
            }
            if order == 2 {
                for a in 0..3 {
                    for b in a..3 {
                        let mut e = vec![0u32; 6];
                        e[a] += 1;
                        e[b] += 1;
                        let c = if a == b { 0.5 * hess[a][b] } else { hess[a][b] };
                        terms.push((e, Complex64::new(c, 0.0)));
                    }
                }
            }
            out.push(Polynomial::from_terms(6, terms)?);
        }
        Ok(out)
    }
}

/// A measurement map bundled with its noise covariance and the expansion
/// order used by the polynomial bridge.
pub struct MeasurementModel {
    map: Box<dyn MeasurementMap>,
    r: DMatrix<f64>,
    taylor_order: u32,
}

impl MeasurementModel {
    pub fn new(
        map: Box<dyn MeasurementMap>,
        r: DMatrix<f64>,
        taylor_order: u32,
    ) -> Result<Self, KofError> {
        let q = map.len();
        if r.nrows() != q || r.ncols() != q {
            return Err(KofError::DimensionMismatch { expected: q, got: r.nrows() });
        }
        let scale = r.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1e-300);
        let asym =
            (&r - r.transpose()).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if asym > 1e-10 * scale {
            return Err(KofError::NotPsd { min_eig: -asym });
        }
        if Cholesky::new(r.clone()).is_none() {
            return Err(KofError::NotPsd { min_eig: f64::NAN });
        }
        if taylor_order < 1 {
            return Err(KofError::TaylorOrder { order: taylor_order });
        }
        Ok(MeasurementModel { map, r, taylor_order })
    }

    /// Exact linear channels `y = H x` with noise covariance `r`.
    pub fn linear(h: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self, KofError> {
        Self::new(Box::new(LinearMeasurement::new(h)), r, 1)
    }

    /// Angle-pair observation from `(offset_x, 0, 0)` with isotropic noise
    /// of standard deviation `sigma` radians on both channels.
    pub fn az_el(offset_x: f64, sigma: f64, taylor_order: u32) -> Result<Self, KofError> {
        let r = DMatrix::identity(2, 2) * (sigma * sigma);
        Self::new(Box::new(AzElMeasurement::new(offset_x)), r, taylor_order)
    }

    pub fn map(&self) -> &dyn MeasurementMap {
        self.map.as_ref()
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn taylor_order(&self) -> u32 {
        self.taylor_order
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.map.state_dim()
    }
}

fn check_state(x: &[f64], dim: usize) -> Result<(), KofError> {
    if x.len() != dim {
        return Err(KofError::DimensionMismatch { expected: dim, got: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(KofError::NonFinite);
    }
    Ok(())
}

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{KoopmanError, KoopmanModel};
use crate::poly::{BasisSet, Polynomial};

/// Observables `g_i` with their Galerkin coefficient rows: `A[i][l] = <g_i, L_l>`,
/// so `g_i ~= (A L)(i)` exactly when `deg g_i <= max_degree`.
#[derive(Debug, Clone)]
pub struct ObservableSet {
    observables: Vec<Polynomial>,
    a: DMatrix<Complex64>,
    real: bool,
}

impl ObservableSet {
    pub fn project(observables: Vec<Polynomial>, basis: &BasisSet) -> Result<Self, KoopmanError> {
        if observables.is_empty() {
            return Err(KoopmanError::DimensionMismatch { expected: 1, got: 0 });
        }
        let m = basis.len();
        let mut a = DMatrix::from_element(observables.len(), m, Complex64::new(0.0, 0.0));
        for (i, g) in observables.iter().enumerate() {
            if g.dim() != basis.dim() {
                return Err(KoopmanError::DimensionMismatch {
                    expected: basis.dim(),
                    got: g.dim(),
                });
            }
            if g.degree() > basis.max_degree() {
                return Err(KoopmanError::ObservableDegree {
                    degree: g.degree(),
                    max_degree: basis.max_degree(),
                });
            }
            let row = basis.project_state(g)?;
            for l in 0..m {
                a[(i, l)] = row[l];
            }
        }
        let real = observables.iter().all(|g| g.imag_residual() == 0.0);
        Ok(ObservableSet { observables, a, real })
    }

    /// The coordinate functions `x_i` — the observables used to propagate
    /// the state itself.
    pub fn identity(basis: &BasisSet) -> Result<Self, KoopmanError> {
        let d = basis.dim();
        Self::project((0..d).map(|i| Polynomial::variable(d, i)).collect(), basis)
    }

    pub fn len(&self) -> usize {
        self.observables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observables.is_empty()
    }

    pub fn observable(&self, i: usize) -> &Polynomial {
        &self.observables[i]
    }

    pub fn a_matrix(&self) -> &DMatrix<Complex64> {
        &self.a
    }

    /// True when every observable has purely real coefficients.
    pub fn is_real(&self) -> bool {
        self.real
    }
}

/// `A C_inv diag(exp(lambda t)) C` — the time-dependent weights of the flow
/// on the basis.
fn flow_weights(
    model: &KoopmanModel,
    observables: &ObservableSet,
    t: f64,
) -> Result<DMatrix<Complex64>, KoopmanError> {
    if !t.is_finite() {
        return Err(KoopmanError::NonFinite);
    }
    let exponent = model
        .lambda()
        .iter()
        .map(|l| l.re * t)
        .fold(f64::NEG_INFINITY, f64::max);
    if exponent > 700.0 {
        return Err(KoopmanError::ExpOverflow { exponent });
    }
    let m = model.len();
    let mut ec = model.c_matrix().clone();
    for i in 0..m {
        let e = (model.lambda()[i] * Complex64::new(t, 0.0)).exp();
        for j in 0..m {
            ec[(i, j)] *= e;
        }
    }
    let x = model.solve_c(&ec)?;
    Ok(observables.a_matrix() * x)
}

/// Builds the polynomial `sum_l w_l L_l(x)` for each weight row, composed
/// into the requested coordinates.
fn polys_from_weights(
    model: &KoopmanModel,
    w: &DMatrix<Complex64>,
    shift: Option<&[Complex64]>,
    realify: bool,
) -> Result<Vec<Polynomial>, KoopmanError> {
    let basis = model.basis();
    let d = basis.dim();
    let inv_sqrt_v = Complex64::new(1.0 / basis.domain().volume_factor().sqrt(), 0.0);
    let mut out = Vec::with_capacity(w.nrows());
    for i in 0..w.nrows() {
        let coeffs = DVector::from_iterator(w.ncols(), w.row(i).iter().copied());
        let p_u = basis.reconstruct_unit(&coeffs)?;
        let p = match shift {
            // x0-coordinates: compose with u(x)
            None => basis.from_unit_coords(&p_u)?.scale(inv_sqrt_v),
            // deviation coordinates: u(center + dx) = u(center) + dx/h
            Some(center) => {
                let a = DMatrix::from_fn(d, d, |r, c| {
                    if r == c {
                        Complex64::new(1.0 / basis.domain().half_width(r), 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                });
                let b = DVector::from_vec(basis.domain().to_unit_point(center));
                p_u.compose_affine(&a, &b).scale(inv_sqrt_v)
            }
        };
        out.push(if realify { p.realified(1e-8)? } else { p });
    }
    Ok(out)
}

/// Flow map polynomials in the initial state: for each observable `g`, the
/// polynomial `x0 -> g(x(t))` obtained from the spectral decomposition.
/// Real observables of real dynamics come back with imaginary parts checked
/// against 1e-8 relative and discarded.
pub fn flow_polynomial(
    model: &KoopmanModel,
    observables: &ObservableSet,
    t: f64,
) -> Result<Vec<Polynomial>, KoopmanError> {
    let w = flow_weights(model, observables, t)?;
    let realify = model.real_dynamics() && observables.is_real();
    polys_from_weights(model, &w, None, realify)
}

/// Flow map polynomials in the deviation `dx0` from `center`: the same flow
/// re-expressed so that the constant term is the propagated center.
pub fn shifted_flow(
    model: &KoopmanModel,
    observables: &ObservableSet,
    t: f64,
    center: &[f64],
) -> Result<Vec<Polynomial>, KoopmanError> {
    let c: Vec<Complex64> = center.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    shifted_flow_complex(model, observables, t, &c)
}

/// `shifted_flow` for complex-valued centers (needed when the model state
/// is a complexified coordinate set whose physical slice is real).
pub fn shifted_flow_complex(
    model: &KoopmanModel,
    observables: &ObservableSet,
    t: f64,
    center: &[Complex64],
) -> Result<Vec<Polynomial>, KoopmanError> {
    let basis = model.basis();
    if center.len() != basis.dim() {
        return Err(KoopmanError::DimensionMismatch {
            expected: basis.dim(),
            got: center.len(),
        });
    }
    if !basis.domain().contains_complex(center) {
        return Err(KoopmanError::CenterOutsideDomain);
    }
    let w = flow_weights(model, observables, t)?;
    let realify = model.real_dynamics()
        && observables.is_real()
        && center.iter().all(|c| c.im == 0.0);
    polys_from_weights(model, &w, Some(center), realify)
}

impl KoopmanModel {
    pub fn flow_polynomial(
        &self,
        observables: &ObservableSet,
        t: f64,
    ) -> Result<Vec<Polynomial>, KoopmanError> {
        flow_polynomial(self, observables, t)
    }

    pub fn shifted_flow(
        &self,
        observables: &ObservableSet,
        t: f64,
        center: &[f64],
    ) -> Result<Vec<Polynomial>, KoopmanError> {
        shifted_flow(self, observables, t, center)
    }

    pub fn shifted_flow_complex(
        &self,
        observables: &ObservableSet,
        t: f64,
        center: &[Complex64],
    ) -> Result<Vec<Polynomial>, KoopmanError> {
        shifted_flow_complex(self, observables, t, center)
    }
}

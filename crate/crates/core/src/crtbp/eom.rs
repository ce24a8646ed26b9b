use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::legendre::solid_legendre;
use super::params::{cn_coefficients, CrtbpParams};
use super::CrtbpError;
use crate::koopman::VectorField;
use crate::poly::{Domain, Polynomial};

/// Embeds a polynomial in the three position variables into the six-state
/// space `(x, y, z, vx, vy, vz)`.
fn embed_position(p: &Polynomial) -> Polynomial {
    let mut a = DMatrix::from_element(3, 6, Complex64::new(0.0, 0.0));
    for i in 0..3 {
        a[(i, i)] = Complex64::new(1.0, 0.0);
    }
    p.compose_affine(&a, &DVector::from_element(3, Complex64::new(0.0, 0.0)))
}

/// First-order equations of motion about the libration point in
/// gamma-scaled coordinates `(x, y, z, vx, vy, vz)`:
///
/// `x'' - 2 y' - (1 + 2 c2) x = d/dx Σ_{n≥3} c_n T_n`
/// `y'' + 2 x' + (c2 - 1) y  = d/dy Σ_{n≥3} c_n T_n`
/// `z'' + c2 z               = d/dz Σ_{n≥3} c_n T_n`
///
/// with the gravity of both primaries expanded in solid Legendre terms
/// through degree `params.order()`, so the field itself has polynomial
/// degree `order - 1`. The returned field carries the unit box as a
/// placeholder domain; rebuild with the operational box before projecting.
pub fn polynomial_eom(params: &CrtbpParams) -> Result<VectorField, CrtbpError> {
    let c = cn_coefficients(params);
    let c2 = c[0];
    let t = solid_legendre(params.order());
    let mut tail = Polynomial::zero(3);
    for n in 3..=params.order() as usize {
        tail.axpy(Complex64::new(c[n - 2], 0.0), &t[n]);
    }
    let grad: Vec<Polynomial> = (0..3)
        .map(|axis| tail.derivative(axis).map(|g| embed_position(&g)))
        .collect::<Result<_, _>>()?;
    let var = |axis: usize| Polynomial::variable(6, axis);

    let mut ax = grad[0].clone();
    ax.axpy(Complex64::new(2.0, 0.0), &var(4));
    ax.axpy(Complex64::new(1.0 + 2.0 * c2, 0.0), &var(0));
    let mut ay = grad[1].clone();
    ay.axpy(Complex64::new(-2.0, 0.0), &var(3));
    ay.axpy(Complex64::new(1.0 - c2, 0.0), &var(1));
    let mut az = grad[2].clone();
    az.axpy(Complex64::new(-c2, 0.0), &var(2));

    Ok(VectorField::new(
        vec![var(3), var(4), var(5), ax, ay, az],
        Domain::unit(6),
    )?)
}

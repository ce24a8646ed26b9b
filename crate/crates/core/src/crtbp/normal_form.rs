use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::frames::{
    canonical_to_libration, libration_to_canonical, libration_to_physical, physical_to_libration,
    ComplexAffine,
};
use super::legendre::solid_legendre;
use super::params::{cn_coefficients, CrtbpParams};
use super::CrtbpError;
use crate::koopman::VectorField;
use crate::poly::{Domain, MultiIndex, Polynomial};

/// Motion about a collinear libration point in complexified normal
/// coordinates `(q1, q2, q3, p1, p2, p3)`: a symplectic change of variables
/// followed by a complexification of the two oscillatory pairs, chosen so the
/// linearized dynamics are exactly diagonal with rates
/// `(lambda1, i omega1, i omega2, -lambda1, -i omega1, -i omega2)`.
///
/// The Hamiltonian is
/// `lambda1 q1 p1 + i omega1 q2 p2 + i omega2 q3 p3 - Σ_{n≥3} c_n T̃_n`
/// with the solid Legendre terms re-expressed in normal coordinates, and the
/// vector field is its Hamilton equations.
pub struct NormalFormModel {
    params: CrtbpParams,
    lambda1: f64,
    omega1: f64,
    omega2: f64,
    c: Vec<f64>,
    hamiltonian: Polynomial,
    eom: VectorField,
    canonical_from_normal: ComplexAffine,
    normal_from_canonical: ComplexAffine,
    to_normal: ComplexAffine,
    from_normal: ComplexAffine,
}

impl NormalFormModel {
    pub fn params(&self) -> &CrtbpParams {
        &self.params
    }

    /// Hyperbolic rate of the in-plane saddle.
    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    /// In-plane oscillation frequency.
    pub fn omega1(&self) -> f64 {
        self.omega1
    }

    /// Out-of-plane oscillation frequency.
    pub fn omega2(&self) -> f64 {
        self.omega2
    }

    /// Gravity expansion coefficients; index 0 holds `c_2`.
    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn hamiltonian(&self) -> &Polynomial {
        &self.hamiltonian
    }

    pub fn eom(&self) -> &VectorField {
        &self.eom
    }

    /// Physical barycentric state → complex normal coordinates.
    pub fn to_normal(&self) -> &ComplexAffine {
        &self.to_normal
    }

    /// Complex normal coordinates → physical barycentric state.
    pub fn from_normal(&self) -> &ComplexAffine {
        &self.from_normal
    }

    /// Canonical libration state → complex normal coordinates.
    pub fn normal_from_canonical(&self) -> &ComplexAffine {
        &self.normal_from_canonical
    }

    /// Complex normal coordinates → canonical libration state.
    pub fn canonical_from_normal(&self) -> &ComplexAffine {
        &self.canonical_from_normal
    }
}

/// Symplectic pairing `Omega(u, v)` of planar `(x, y, px, py)` vectors.
fn omega_product(u: &[f64; 4], v: &[f64; 4]) -> f64 {
    u[0] * v[2] + u[1] * v[3] - u[2] * v[0] - u[3] * v[1]
}

/// The symplectic basis of the linearized canonical dynamics, as the matrix
/// mapping real normal coordinates `(q1, q2, q3, p1, p2, p3)` to canonical
/// `(x, y, z, px, py, pz)`. Columns are eigenvector pairs normalized so the
/// quadratic Hamiltonian becomes
/// `lambda1 q1 p1 + (omega1/2)(q2^2 + p2^2) + (omega2/2)(q3^2 + p3^2)`.
fn real_normal_columns(
    c2: f64,
    lambda1: f64,
    omega1: f64,
    omega2: f64,
    discriminant: f64,
) -> Result<DMatrix<f64>, CrtbpError> {
    // planar eigenvectors of the pseudo-momentum linearization have the
    // closed form (1, nu, s - nu, s nu + 1) with nu = (s^2 - 1 - 2 c2)/(2 s)
    let nu = (lambda1 * lambda1 - 1.0 - 2.0 * c2) / (2.0 * lambda1);
    let u_plus = [1.0, nu, lambda1 - nu, lambda1 * nu + 1.0];
    let mut u_minus = [1.0, -nu, -lambda1 + nu, lambda1 * nu + 1.0];
    let mut sig_h = omega_product(&u_plus, &u_minus);
    if sig_h < 0.0 {
        // flipping the p1 direction preserves H = lambda1 q1 p1
        for v in &mut u_minus {
            *v = -*v;
        }
        sig_h = -sig_h;
    }
    // for s = i omega1 the eigenvector splits into real and imaginary parts
    // (1, 0, 0, 1 - omega1 n1) and (0, n1, omega1 - n1, 0)
    let n1 = (omega1 * omega1 + 1.0 + 2.0 * c2) / (2.0 * omega1);
    let r = [1.0, 0.0, 0.0, 1.0 - omega1 * n1];
    let m = [0.0, n1, omega1 - n1, 0.0];
    // the +omega1 oscillator sign requires a positive pairing here; c2 > 1
    // guarantees it
    let sig_e = omega_product(&r, &m);
    if sig_h <= 0.0 || sig_e <= 0.0 {
        return Err(CrtbpError::InvalidRegime { discriminant });
    }
    let sh = sig_h.sqrt();
    let se = sig_e.sqrt();

    let mut cm = DMatrix::zeros(6, 6);
    let mut put_planar = |col: usize, v: &[f64; 4], scale: f64| {
        cm[(0, col)] = v[0] / scale;
        cm[(1, col)] = v[1] / scale;
        cm[(3, col)] = v[2] / scale;
        cm[(4, col)] = v[3] / scale;
    };
    put_planar(0, &u_plus, sh);
    put_planar(3, &u_minus, sh);
    put_planar(1, &r, se);
    put_planar(4, &m, se);
    // vertical oscillator: z = q3 / sqrt(omega2), pz = sqrt(omega2) p3
    cm[(2, 2)] = 1.0 / omega2.sqrt();
    cm[(5, 5)] = omega2.sqrt();
    Ok(cm)
}

/// `[[0, I], [-I, 0]]` for the `(x, y, z, px, py, pz)` ordering.
fn omega6() -> DMatrix<f64> {
    let mut w = DMatrix::zeros(6, 6);
    for i in 0..3 {
        w[(i, 3 + i)] = 1.0;
        w[(3 + i, i)] = -1.0;
    }
    w
}

/// Complexification of the two oscillatory pairs and its inverse: the real
/// pair maps as `q = (q~ + i p~)/sqrt(2)`, `p = (i q~ + p~)/sqrt(2)`, which
/// turns `(omega/2)(q^2 + p^2)` into `i omega q~ p~` and stays symplectic.
fn complexification() -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let is = Complex64::new(0.0, std::f64::consts::FRAC_1_SQRT_2);
    let mut k = DMatrix::from_element(6, 6, zero);
    let mut k_inv = DMatrix::from_element(6, 6, zero);
    k[(0, 0)] = one;
    k[(3, 3)] = one;
    k_inv[(0, 0)] = one;
    k_inv[(3, 3)] = one;
    for pair in [1usize, 2] {
        let (q, p) = (pair, pair + 3);
        k[(q, q)] = s;
        k[(q, p)] = is;
        k[(p, q)] = is;
        k[(p, p)] = s;
        k_inv[(q, q)] = s;
        k_inv[(q, p)] = -is;
        k_inv[(p, q)] = -is;
        k_inv[(p, p)] = s;
    }
    (k, k_inv)
}

/// Frequencies and the real symplectic basis shared by both normal-form
/// stages.
struct LinearStage {
    c: Vec<f64>,
    lambda1: f64,
    omega1: f64,
    omega2: f64,
    c_real: DMatrix<f64>,
    c_real_inv: DMatrix<f64>,
}

fn linear_stage(params: &CrtbpParams) -> Result<LinearStage, CrtbpError> {
    let c = cn_coefficients(params);
    let c2 = c[0];
    let discriminant = 9.0 * c2 * c2 - 8.0 * c2;
    if discriminant < 0.0 {
        return Err(CrtbpError::InvalidRegime { discriminant });
    }
    let sq = discriminant.sqrt();
    // u^2 + (2 - c2) u - (1 + 2 c2)(c2 - 1) = 0 has one positive root
    // (lambda1^2) and one negative root (-omega1^2) whenever c2 > 1
    let lambda_sq = (c2 - 2.0 + sq) / 2.0;
    let omega1_sq = (2.0 - c2 + sq) / 2.0;
    if lambda_sq <= 0.0 || omega1_sq <= 0.0 || c2 <= 0.0 {
        return Err(CrtbpError::InvalidRegime { discriminant });
    }
    let lambda1 = lambda_sq.sqrt();
    let omega1 = omega1_sq.sqrt();
    let omega2 = c2.sqrt();

    let c_real = real_normal_columns(c2, lambda1, omega1, omega2, discriminant)?;
    // symplectic inverse: C^-1 = -Omega C^T Omega
    let w = omega6();
    let c_real_inv = -(&w * c_real.transpose() * &w);
    Ok(LinearStage { c, lambda1, omega1, omega2, c_real, c_real_inv })
}

/// Adds `-Σ_{n≥3} c_n T_n` with the solid terms pulled back through the
/// position rows of the coordinate change.
fn gravity_tail(
    h: &mut Polynomial,
    c: &[f64],
    order: u32,
    pos_rows: &DMatrix<Complex64>,
) {
    let t = solid_legendre(order);
    let zero3 = DVector::from_element(3, Complex64::new(0.0, 0.0));
    for n in 3..=order as usize {
        let t_sub = t[n].compose_affine(pos_rows, &zero3);
        h.axpy(Complex64::new(-c[n - 2], 0.0), &t_sub);
    }
}

/// Hamilton's equations `dq/dt = dH/dp, dp/dt = -dH/dq` as a vector field.
fn hamilton_equations(h: &Polynomial) -> Result<VectorField, CrtbpError> {
    let mut comps = Vec::with_capacity(6);
    for i in 0..3 {
        comps.push(h.derivative(3 + i)?);
    }
    for i in 0..3 {
        comps.push(h.derivative(i)?.scale(Complex64::new(-1.0, 0.0)));
    }
    Ok(VectorField::new(comps, Domain::unit(6))?)
}

fn mono6(exps: [u32; 6], coeff: Complex64) -> Polynomial {
    Polynomial::monomial(6, MultiIndex::new(exps.to_vec()), coeff)
}

/// Builds the normal-form model: frequencies from the characteristic roots
/// of the linearization, the symplectic + complexifying change of variables,
/// the transformed Hamiltonian, and its equations of motion.
pub fn hamiltonian_normal_form(params: &CrtbpParams) -> Result<NormalFormModel, CrtbpError> {
    let stage = linear_stage(params)?;
    let LinearStage { c, lambda1, omega1, omega2, c_real, c_real_inv } = stage;
    let (k, k_inv) = complexification();
    let to_c = |m: &DMatrix<f64>| m.map(|v| Complex64::new(v, 0.0));
    let canonical_from_normal = ComplexAffine::from_linear(to_c(&c_real) * &k);
    let normal_from_canonical = ComplexAffine::from_linear(&k_inv * to_c(&c_real_inv));

    // quadratic part written symbolically so the linear dynamics are
    // diagonal by construction, not up to roundoff
    let mut h = Polynomial::zero(6);
    let one = Complex64::new(1.0, 0.0);
    h.axpy(one, &mono6([1, 0, 0, 1, 0, 0], Complex64::new(lambda1, 0.0)));
    h.axpy(one, &mono6([0, 1, 0, 0, 1, 0], Complex64::new(0.0, omega1)));
    h.axpy(one, &mono6([0, 0, 1, 0, 0, 1], Complex64::new(0.0, omega2)));
    // gravity tail: positions of the canonical frame are its first three rows
    let pos_rows = canonical_from_normal.matrix().rows(0, 3).into_owned();
    gravity_tail(&mut h, &c, params.order(), &pos_rows);

    let eom = hamilton_equations(&h)?;

    let to_normal = normal_from_canonical
        .compose(&libration_to_canonical().compose(&physical_to_libration(params)));
    let from_normal = libration_to_physical(params)
        .compose(&canonical_to_libration().compose(&canonical_from_normal));

    Ok(NormalFormModel {
        params: *params,
        lambda1,
        omega1,
        omega2,
        c,
        hamiltonian: h,
        eom,
        canonical_from_normal,
        normal_from_canonical,
        to_normal,
        from_normal,
    })
}

/// Motion about a collinear libration point in the real symplectic modal
/// coordinates `(q1, q2, q3, p1, p2, p3)` — the same change of variables as
/// [`NormalFormModel`] without the final complexification, so every
/// coefficient stays real:
///
/// ```text
/// H = lambda1 q1 p1 + (omega1/2)(q2^2 + p2^2) + (omega2/2)(q3^2 + p3^2)
///     - Σ_{n≥3} c_n T_n
/// ```
///
/// The linearized motion is block-diagonal (a saddle and two rotations)
/// with the same spectrum as the diagonal complex stage, which makes this
/// the natural frame for building real-coefficient spectral models.
pub struct RealModalModel {
    params: CrtbpParams,
    lambda1: f64,
    omega1: f64,
    omega2: f64,
    c: Vec<f64>,
    hamiltonian: Polynomial,
    eom: VectorField,
    canonical_from_modal: ComplexAffine,
    modal_from_canonical: ComplexAffine,
    to_modal: ComplexAffine,
    from_modal: ComplexAffine,
}

impl RealModalModel {
    pub fn params(&self) -> &CrtbpParams {
        &self.params
    }

    /// Hyperbolic rate of the in-plane saddle.
    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    /// In-plane oscillation frequency.
    pub fn omega1(&self) -> f64 {
        self.omega1
    }

    /// Out-of-plane oscillation frequency.
    pub fn omega2(&self) -> f64 {
        self.omega2
    }

    /// Gravity expansion coefficients; index 0 holds `c_2`.
    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn hamiltonian(&self) -> &Polynomial {
        &self.hamiltonian
    }

    pub fn eom(&self) -> &VectorField {
        &self.eom
    }

    /// Physical barycentric state → real modal coordinates.
    pub fn to_modal(&self) -> &ComplexAffine {
        &self.to_modal
    }

    /// Real modal coordinates → physical barycentric state.
    pub fn from_modal(&self) -> &ComplexAffine {
        &self.from_modal
    }

    /// Canonical libration state → real modal coordinates.
    pub fn modal_from_canonical(&self) -> &ComplexAffine {
        &self.modal_from_canonical
    }

    /// Real modal coordinates → canonical libration state.
    pub fn canonical_from_modal(&self) -> &ComplexAffine {
        &self.canonical_from_modal
    }
}

/// Builds the real modal model: the symplectic change of variables alone,
/// with the Hamiltonian and equations of motion kept real.
pub fn real_modal_form(params: &CrtbpParams) -> Result<RealModalModel, CrtbpError> {
    let stage = linear_stage(params)?;
    let LinearStage { c, lambda1, omega1, omega2, c_real, c_real_inv } = stage;
    let to_c = |m: &DMatrix<f64>| m.map(|v| Complex64::new(v, 0.0));
    let canonical_from_modal = ComplexAffine::from_linear(to_c(&c_real));
    let modal_from_canonical = ComplexAffine::from_linear(to_c(&c_real_inv));

    let mut h = Polynomial::zero(6);
    let one = Complex64::new(1.0, 0.0);
    h.axpy(one, &mono6([1, 0, 0, 1, 0, 0], Complex64::new(lambda1, 0.0)));
    let half_w1 = Complex64::new(0.5 * omega1, 0.0);
    h.axpy(one, &mono6([0, 2, 0, 0, 0, 0], half_w1));
    h.axpy(one, &mono6([0, 0, 0, 0, 2, 0], half_w1));
    let half_w2 = Complex64::new(0.5 * omega2, 0.0);
    h.axpy(one, &mono6([0, 0, 2, 0, 0, 0], half_w2));
    h.axpy(one, &mono6([0, 0, 0, 0, 0, 2], half_w2));
    let pos_rows = canonical_from_modal.matrix().rows(0, 3).into_owned();
    gravity_tail(&mut h, &c, params.order(), &pos_rows);

    let eom = hamilton_equations(&h)?;

    let to_modal = modal_from_canonical
        .compose(&libration_to_canonical().compose(&physical_to_libration(params)));
    let from_modal = libration_to_physical(params)
        .compose(&canonical_to_libration().compose(&canonical_from_modal));

    Ok(RealModalModel {
        params: *params,
        lambda1,
        omega1,
        omega2,
        c,
        hamiltonian: h,
        eom,
        canonical_from_modal,
        modal_from_canonical,
        to_modal,
        from_modal,
    })
}

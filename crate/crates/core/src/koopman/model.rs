use faer::Mat;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{KoopmanError, VectorField};
use crate::poly::{BasisSet, Domain, Polynomial};

/// Above this condition number of the eigenvector matrix, flow evaluation
/// solves against `C` instead of multiplying by the stored inverse.
pub const COND_SOLVE_THRESHOLD: f64 = 1e10;
/// Above this condition number the matrix is treated as defective.
pub const COND_DEFECTIVE_LIMIT: f64 = 1e12;

/// Galerkin matrix of the generator: `K[i][j] = <grad L_i . f, L_j>` over
/// the basis domain.
///
/// Assembly runs in unit-cube coordinates: with `L_i(x) = Lhat_i(u(x))/sqrt(V)`
/// the chain-rule factor `1/h` folds into `f_u_i(u) = f_i(x(u))/h_i` and the
/// measure scaling cancels the normalization, so the unit-cube entries equal
/// the state-coordinate entries exactly while every intermediate coefficient
/// stays O(1) even on very narrow boxes.
pub fn build_koopman_matrix(
    f: &VectorField,
    basis: &BasisSet,
) -> Result<DMatrix<Complex64>, KoopmanError> {
    if f.dim() != basis.dim() {
        return Err(KoopmanError::DimensionMismatch {
            expected: basis.dim(),
            got: f.dim(),
        });
    }
    let d = basis.dim();
    let m = basis.len();
    let (a, b) = basis.domain().unit_to_state_affine();
    let mut f_unit: Vec<Polynomial> = Vec::with_capacity(d);
    for i in 0..d {
        let hi = basis.domain().half_width(i);
        let mut fu = f
            .component(i)
            .compose_affine(&a, &b)
            .scale(Complex64::new(1.0 / hi, 0.0));
        if fu.degree() > basis.max_degree() {
            // Truncate the field onto the basis span first, so the assembled
            // operator is a fixed projection rather than quadrature-dependent.
            let coeffs = basis.project_unit(&fu)?;
            fu = basis.reconstruct_unit(&coeffs)?;
        }
        f_unit.push(fu);
    }
    let mut k = DMatrix::from_element(m, m, Complex64::new(0.0, 0.0));
    for i in 0..m {
        let mut g = Polynomial::zero(d);
        for (axis, fu) in f_unit.iter().enumerate() {
            let dl = basis.unit_poly(i).derivative(axis)?;
            if dl.is_zero() || fu.is_zero() {
                continue;
            }
            g = g.add(&dl.mul(fu)?)?;
        }
        let row = basis.project_unit(&g)?;
        for j in 0..m {
            k[(i, j)] = row[j];
        }
    }
    Ok(k)
}

/// Left eigendecomposition `C K = diag(Lambda) C` with deterministic
/// ordering and normalization.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub lambda: DVector<Complex64>,
    /// Rows are left eigenvectors, unit 2-norm, largest entry rotated to the
    /// positive real axis.
    pub c: DMatrix<Complex64>,
    pub c_inv: DMatrix<Complex64>,
    /// One-norm condition estimate of `C`.
    pub cond_c: f64,
}

pub fn eigendecompose(k: &DMatrix<Complex64>) -> Result<SpectralDecomposition, KoopmanError> {
    let m = k.nrows();
    if k.ncols() != m || m == 0 {
        return Err(KoopmanError::DimensionMismatch {
            expected: m.max(1),
            got: k.ncols(),
        });
    }
    if !k.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
        return Err(KoopmanError::NonFinite);
    }
    // Left eigenvectors of K are right eigenvectors of K^T.
    let kt = Mat::<Complex64>::from_fn(m, m, |i, j| k[(j, i)]);
    let evd = kt.eigen().map_err(|_| KoopmanError::EigenFailed)?;
    let u = evd.U();
    let s = evd.S();
    let mut rows: Vec<(Complex64, Vec<Complex64>)> = (0..m)
        .map(|e| (s[e], (0..m).map(|j| u[(j, e)]).collect()))
        .collect();
    // Real part descending, then |Im| descending, then Im descending is the
    // deterministic base order. A pairing pass then walks it and pulls each
    // conjugate partner adjacent (positive-imaginary member first): rounding
    // noise in the real parts would otherwise interleave distinct pairs that
    // share a real part.
    rows.sort_by(|a, b| {
        b.0.re
            .total_cmp(&a.0.re)
            .then(b.0.im.abs().total_cmp(&a.0.im.abs()))
            .then(b.0.im.total_cmp(&a.0.im))
    });
    let mut order: Vec<usize> = Vec::with_capacity(m);
    let mut used = vec![false; m];
    for i in 0..m {
        if used[i] {
            continue;
        }
        used[i] = true;
        let li = rows[i].0;
        let mut partner: Option<usize> = None;
        if li.im != 0.0 {
            let mut best_dist = f64::INFINITY;
            for (j, row) in rows.iter().enumerate().skip(i + 1) {
                if used[j] {
                    continue;
                }
                let dist = (row.0 - li.conj()).norm();
                if dist < best_dist {
                    best_dist = dist;
                    partner = Some(j);
                }
            }
            if best_dist > 1e-8 * (1.0 + li.norm()) {
                partner = None;
            }
        }
        match partner {
            Some(j) if li.im < 0.0 => {
                used[j] = true;
                order.push(j);
                order.push(i);
            }
            Some(j) => {
                used[j] = true;
                order.push(i);
                order.push(j);
            }
            None => order.push(i),
        }
    }
    let mut rows: Vec<(Complex64, Vec<Complex64>)> =
        order.into_iter().map(|r| rows[r].clone()).collect();
    for (_, row) in rows.iter_mut() {
        let norm = row.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            let inv = Complex64::new(1.0 / norm, 0.0);
            for c in row.iter_mut() {
                *c *= inv;
            }
        }
        let mut best = 0usize;
        let mut best_mag = 0.0f64;
        for (j, c) in row.iter().enumerate() {
            let mag = c.norm();
            if mag > best_mag {
                best = j;
                best_mag = mag;
            }
        }
        if best_mag > 0.0 {
            let rot = row[best].conj() / Complex64::new(best_mag, 0.0);
            for c in row.iter_mut() {
                *c *= rot;
            }
            row[best] = Complex64::new(row[best].re, 0.0);
        }
    }
    let lambda = DVector::from_iterator(m, rows.iter().map(|(s, _)| *s));
    let c = DMatrix::from_fn(m, m, |i, j| rows[i].1[j]);

    let lu = c.clone().lu();
    let c_inv = lu.try_inverse().ok_or(KoopmanError::NonDiagonalizable {
        cond: f64::INFINITY,
        limit: COND_DEFECTIVE_LIMIT,
    })?;
    // One Newton step drives the inverse residual to the rounding floor.
    let residual = DMatrix::identity(m, m) - &c * &c_inv;
    let c_inv = &c_inv + &c_inv * residual;

    let cond_c = one_norm(&c) * one_norm(&c_inv);
    if cond_c > COND_DEFECTIVE_LIMIT {
        return Err(KoopmanError::NonDiagonalizable {
            cond: cond_c,
            limit: COND_DEFECTIVE_LIMIT,
        });
    }
    let inv_residual = inf_norm(&(DMatrix::identity(m, m) - &c * &c_inv));
    if inv_residual > 1e-8 && cond_c <= COND_SOLVE_THRESHOLD {
        return Err(KoopmanError::EigenFailed);
    }
    // ||C K - Lambda C||_inf relative to ||K||_inf
    let mut res = &c * k;
    for i in 0..m {
        for j in 0..m {
            res[(i, j)] -= lambda[i] * c[(i, j)];
        }
    }
    let k_norm = inf_norm(k);
    if inf_norm(&res) > 1e-8 * k_norm.max(f64::MIN_POSITIVE) && k_norm > 0.0 {
        return Err(KoopmanError::EigenFailed);
    }
    Ok(SpectralDecomposition {
        lambda,
        c,
        c_inv,
        cond_c,
    })
}

fn one_norm(m: &DMatrix<Complex64>) -> f64 {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)].norm()).sum())
        .fold(0.0, f64::max)
}

fn inf_norm(m: &DMatrix<Complex64>) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].norm()).sum())
        .fold(0.0, f64::max)
}

/// A vector field, its Galerkin matrix, and the spectral decomposition —
/// everything needed to write down flow polynomials at arbitrary times.
/// Immutable after construction; flow evaluation is pure.
#[derive(Debug, Clone)]
pub struct KoopmanModel {
    basis: BasisSet,
    field: VectorField,
    k: DMatrix<Complex64>,
    lambda: DVector<Complex64>,
    c: DMatrix<Complex64>,
    c_inv: DMatrix<Complex64>,
    cond_c: f64,
    real_dynamics: bool,
}

impl KoopmanModel {
    pub fn build(field: VectorField, basis: BasisSet) -> Result<Self, KoopmanError> {
        let k = build_koopman_matrix(&field, &basis)?;
        let spectral = eigendecompose(&k)?;
        let real_dynamics = field.imag_residual() == 0.0;
        Ok(KoopmanModel {
            basis,
            field,
            k,
            lambda: spectral.lambda,
            c: spectral.c,
            c_inv: spectral.c_inv,
            cond_c: spectral.cond_c,
            real_dynamics,
        })
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn field(&self) -> &VectorField {
        &self.field
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn k_matrix(&self) -> &DMatrix<Complex64> {
        &self.k
    }

    pub fn lambda(&self) -> &DVector<Complex64> {
        &self.lambda
    }

    pub fn c_matrix(&self) -> &DMatrix<Complex64> {
        &self.c
    }

    pub fn c_inv(&self) -> &DMatrix<Complex64> {
        &self.c_inv
    }

    pub fn cond_c(&self) -> f64 {
        self.cond_c
    }

    /// True when the vector field (hence `K`) has purely real coefficients;
    /// flows of real observables are then realified.
    pub fn real_dynamics(&self) -> bool {
        self.real_dynamics
    }

    /// `||C K - diag(Lambda) C||_inf / ||K||_inf` — eigendecomposition quality.
    pub fn eigen_residual(&self) -> f64 {
        let m = self.len();
        let mut res = &self.c * &self.k;
        for i in 0..m {
            for j in 0..m {
                res[(i, j)] -= self.lambda[i] * self.c[(i, j)];
            }
        }
        inf_norm(&res) / inf_norm(&self.k).max(f64::MIN_POSITIVE)
    }

    /// `||C C_inv - I||_inf` — inverse quality.
    pub fn inverse_residual(&self) -> f64 {
        let m = self.len();
        inf_norm(&(DMatrix::identity(m, m) - &self.c * &self.c_inv))
    }

    /// `C_inv * rhs`, switching to an LU solve when `C` is ill-conditioned
    /// enough that the explicit inverse loses accuracy.
    pub(crate) fn solve_c(&self, rhs: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>, KoopmanError> {
        if self.cond_c <= COND_SOLVE_THRESHOLD {
            Ok(&self.c_inv * rhs)
        } else {
            self.c
                .clone()
                .lu()
                .solve(rhs)
                .ok_or(KoopmanError::EigenFailed)
        }
    }

    pub fn to_json(&self) -> String {
        let repr = ModelRepr {
            version: ARTIFACT_VERSION,
            max_degree: self.basis.max_degree(),
            domain: self.basis.domain().clone(),
            field: self.field.clone(),
            k: matrix_repr(&self.k),
            lambda: self.lambda.iter().map(|c| [c.re, c.im]).collect(),
            c: matrix_repr(&self.c),
            c_inv: matrix_repr(&self.c_inv),
            cond_c: self.cond_c,
        };
        serde_json::to_string(&repr).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, KoopmanError> {
        let repr: ModelRepr = serde_json::from_str(text)
            .map_err(|e| KoopmanError::ArtifactFormat(e.to_string()))?;
        if repr.version != ARTIFACT_VERSION {
            return Err(KoopmanError::ArtifactVersion {
                got: repr.version,
                expected: ARTIFACT_VERSION,
            });
        }
        let basis = BasisSet::new(repr.domain.dim(), repr.max_degree, repr.domain.clone())?;
        let m = basis.len();
        let k = matrix_from_repr(&repr.k, m)?;
        let c = matrix_from_repr(&repr.c, m)?;
        let c_inv = matrix_from_repr(&repr.c_inv, m)?;
        if repr.lambda.len() != m {
            return Err(KoopmanError::ArtifactFormat(format!(
                "lambda length {} does not match basis size {m}",
                repr.lambda.len()
            )));
        }
        let lambda =
            DVector::from_iterator(m, repr.lambda.iter().map(|&[re, im]| Complex64::new(re, im)));
        if repr.field.dim() != basis.dim() {
            return Err(KoopmanError::ArtifactFormat(format!(
                "field dimension {} does not match basis dimension {}",
                repr.field.dim(),
                basis.dim()
            )));
        }
        let real_dynamics = repr.field.imag_residual() == 0.0;
        let model = KoopmanModel {
            basis,
            field: repr.field,
            k,
            lambda,
            c,
            c_inv,
            cond_c: repr.cond_c,
            real_dynamics,
        };
        // Integrity check: a tampered or mismatched artifact fails here
        // rather than producing silently wrong flows.
        if model.eigen_residual() > 1e-8 {
            return Err(KoopmanError::ArtifactFormat(
                "eigendecomposition residual exceeds tolerance".into(),
            ));
        }
        Ok(model)
    }
}

const ARTIFACT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    version: u32,
    max_degree: u32,
    domain: Domain,
    field: VectorField,
    k: Vec<Vec<[f64; 2]>>,
    lambda: Vec<[f64; 2]>,
    c: Vec<Vec<[f64; 2]>>,
    c_inv: Vec<Vec<[f64; 2]>>,
    cond_c: f64,
}

fn matrix_repr(m: &DMatrix<Complex64>) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

fn matrix_from_repr(rows: &[Vec<[f64; 2]>], m: usize) -> Result<DMatrix<Complex64>, KoopmanError> {
    if rows.len() != m || rows.iter().any(|r| r.len() != m) {
        return Err(KoopmanError::ArtifactFormat(format!(
            "matrix shape does not match basis size {m}"
        )));
    }
    Ok(DMatrix::from_fn(m, m, |i, j| {
        Complex64::new(rows[i][j][0], rows[i][j][1])
    }))
}

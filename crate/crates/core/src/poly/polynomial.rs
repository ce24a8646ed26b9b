use super::{MultiIndex, PolyError};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Sparse multivariate polynomial with complex coefficients.
///
/// Terms are keyed by exponent vector in graded order and never store an
/// exact zero coefficient, so iteration order and the serialized form are
/// deterministic for a given value.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolyRepr", into = "PolyRepr")]
pub struct Polynomial {
    dim: usize,
    terms: BTreeMap<MultiIndex, Complex64>,
}

impl Polynomial {
    pub fn zero(dim: usize) -> Self {
        Polynomial {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, value: Complex64) -> Self {
        let mut p = Polynomial::zero(dim);
        p.insert(MultiIndex::zeros(dim), value);
        p
    }

    pub fn constant_re(dim: usize, value: f64) -> Self {
        Polynomial::constant(dim, Complex64::new(value, 0.0))
    }

    /// The coordinate function `x_axis`.
    pub fn variable(dim: usize, axis: usize) -> Self {
        assert!(axis < dim, "variable axis {axis} out of range for dim {dim}");
        let mut p = Polynomial::zero(dim);
        p.insert(MultiIndex::unit(dim, axis), Complex64::new(1.0, 0.0));
        p
    }

    pub fn monomial(dim: usize, index: MultiIndex, coeff: Complex64) -> Self {
        assert_eq!(index.dim(), dim, "monomial exponent length != dim");
        let mut p = Polynomial::zero(dim);
        p.insert(index, coeff);
        p
    }

    /// Builds from `(exponents, coefficient)` pairs; repeated exponents accumulate.
    pub fn from_terms(
        dim: usize,
        terms: impl IntoIterator<Item = (Vec<u32>, Complex64)>,
    ) -> Result<Self, PolyError> {
        let mut p = Polynomial::zero(dim);
        for (exp, c) in terms {
            if exp.len() != dim {
                return Err(PolyError::DimensionMismatch {
                    expected: dim,
                    got: exp.len(),
                });
            }
            p.insert(MultiIndex::new(exp), c);
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Total degree; zero polynomial reports 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(MultiIndex::degree).max().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &Complex64)> {
        self.terms.iter()
    }

    pub fn coeff(&self, index: &MultiIndex) -> Complex64 {
        self.terms
            .get(index)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    fn insert(&mut self, index: MultiIndex, c: Complex64) {
        if c.re == 0.0 && c.im == 0.0 {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(index) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                let v = *e.get() + c;
                if v.re == 0.0 && v.im == 0.0 {
                    e.remove();
                } else {
                    *e.get_mut() = v;
                }
            }
        }
    }

    /// `self += factor * other`; dims must already agree.
    pub(crate) fn axpy(&mut self, factor: Complex64, other: &Polynomial) {
        debug_assert_eq!(self.dim, other.dim);
        if factor.re == 0.0 && factor.im == 0.0 {
            return;
        }
        for (idx, c) in &other.terms {
            self.insert(idx.clone(), factor * c);
        }
    }

    pub fn add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dim(other.dim)?;
        let mut out = self.clone();
        out.axpy(Complex64::new(1.0, 0.0), other);
        Ok(out)
    }

    pub fn sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dim(other.dim)?;
        let mut out = self.clone();
        out.axpy(Complex64::new(-1.0, 0.0), other);
        Ok(out)
    }

    pub fn scale(&self, factor: Complex64) -> Polynomial {
        let mut out = Polynomial::zero(self.dim);
        out.axpy(factor, self);
        out
    }

    pub fn mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dim(other.dim)?;
        let mut out = Polynomial::zero(self.dim);
        for (ia, ca) in &self.terms {
            for (ib, cb) in &other.terms {
                let exp: Vec<u32> = ia
                    .as_slice()
                    .iter()
                    .zip(ib.as_slice())
                    .map(|(a, b)| a + b)
                    .collect();
                out.insert(MultiIndex::new(exp), ca * cb);
            }
        }
        Ok(out)
    }

    /// Partial derivative along `axis`.
    pub fn derivative(&self, axis: usize) -> Result<Polynomial, PolyError> {
        if axis >= self.dim {
            return Err(PolyError::DimensionMismatch {
                expected: self.dim,
                got: axis,
            });
        }
        let mut out = Polynomial::zero(self.dim);
        for (idx, c) in &self.terms {
            let e = idx.as_slice()[axis];
            if e == 0 {
                continue;
            }
            let mut exp = idx.as_slice().to_vec();
            exp[axis] = e - 1;
            out.insert(MultiIndex::new(exp), c * e as f64);
        }
        Ok(out)
    }

    pub fn evaluate(&self, point: &[Complex64]) -> Result<Complex64, PolyError> {
        self.check_dim(point.len())?;
        // per-axis power cache up to the largest exponent actually used
        let mut max_exp = vec![0u32; self.dim];
        for idx in self.terms.keys() {
            for (m, &e) in max_exp.iter_mut().zip(idx.as_slice()) {
                *m = (*m).max(e);
            }
        }
        let powers: Vec<Vec<Complex64>> = point
            .iter()
            .zip(&max_exp)
            .map(|(&x, &m)| {
                let mut pw = Vec::with_capacity(m as usize + 1);
                pw.push(Complex64::new(1.0, 0.0));
                for k in 1..=m as usize {
                    let prev = pw[k - 1];
                    pw.push(prev * x);
                }
                pw
            })
            .collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for (idx, c) in &self.terms {
            let mut term = *c;
            for (axis, &e) in idx.as_slice().iter().enumerate() {
                if e > 0 {
                    term *= powers[axis][e as usize];
                }
            }
            acc += term;
        }
        Ok(acc)
    }

    pub fn evaluate_real(&self, point: &[f64]) -> Result<Complex64, PolyError> {
        let z: Vec<Complex64> = point.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.evaluate(&z)
    }

    /// Re-centers: returns `q` with `q(delta) = self(center + delta)`.
    pub fn shift_center(&self, center: &[Complex64]) -> Result<Polynomial, PolyError> {
        self.check_dim(center.len())?;
        let a = DMatrix::identity(self.dim, self.dim);
        let b = DVector::from_column_slice(center);
        Ok(self.compose_affine(&a, &b))
    }

    pub fn shift_center_real(&self, center: &[f64]) -> Result<Polynomial, PolyError> {
        let z: Vec<Complex64> = center.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.shift_center(&z)
    }

    /// Substitutes `x = b + A y`, returning a polynomial in `y` with
    /// `a.ncols()` variables. Exact up to rounding.
    pub fn compose_affine(&self, a: &DMatrix<Complex64>, b: &DVector<Complex64>) -> Polynomial {
        assert_eq!(a.nrows(), self.dim, "affine map rows != polynomial dim");
        assert_eq!(b.len(), self.dim, "affine offset length != polynomial dim");
        let out_dim = a.ncols();
        // linear form for each original variable
        let forms: Vec<Polynomial> = (0..self.dim)
            .map(|i| {
                let mut f = Polynomial::constant(out_dim, b[i]);
                for j in 0..out_dim {
                    let c = a[(i, j)];
                    if c.re != 0.0 || c.im != 0.0 {
                        f.insert(MultiIndex::unit(out_dim, j), c);
                    }
                }
                f
            })
            .collect();
        // power cache per original variable, grown on demand
        let mut powers: Vec<Vec<Polynomial>> = (0..self.dim)
            .map(|_| vec![Polynomial::constant_re(out_dim, 1.0)])
            .collect();
        let mut out = Polynomial::zero(out_dim);
        for (idx, &c) in &self.terms {
            let mut prod = Polynomial::constant(out_dim, c);
            for (axis, &e) in idx.as_slice().iter().enumerate() {
                if e == 0 {
                    continue;
                }
                while powers[axis].len() <= e as usize {
                    let next = powers[axis]
                        .last()
                        .unwrap()
                        .mul(&forms[axis])
                        .expect("same dim");
                    powers[axis].push(next);
                }
                prod = prod.mul(&powers[axis][e as usize]).expect("same dim");
            }
            out.axpy(Complex64::new(1.0, 0.0), &prod);
        }
        out
    }

    /// Largest coefficient magnitude (infinity norm over terms).
    pub fn max_coeff_norm(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Drops terms with magnitude below `rel_tol` times the largest
    /// coefficient. Only meaningful when coefficient scales are homogeneous.
    pub fn compress(&mut self, rel_tol: f64) {
        let cutoff = rel_tol * self.max_coeff_norm();
        self.terms.retain(|_, c| c.norm() >= cutoff && (c.re != 0.0 || c.im != 0.0));
    }

    /// `max |Im c| / max |c|`; zero polynomial reports 0.
    pub fn imag_residual(&self) -> f64 {
        let scale = self.max_coeff_norm();
        if scale == 0.0 {
            return 0.0;
        }
        let worst = self
            .terms
            .values()
            .map(|c| c.im.abs())
            .fold(0.0, f64::max);
        worst / scale
    }

    /// Checks the imaginary residual against `rel_tol` and discards it.
    pub fn realified(&self, rel_tol: f64) -> Result<Polynomial, PolyError> {
        let residual = self.imag_residual();
        if residual > rel_tol {
            return Err(PolyError::ImaginaryResidual {
                residual,
                tol: rel_tol,
            });
        }
        let mut out = Polynomial::zero(self.dim);
        for (idx, c) in &self.terms {
            out.insert(idx.clone(), Complex64::new(c.re, 0.0));
        }
        Ok(out)
    }

    fn check_dim(&self, got: usize) -> Result<(), PolyError> {
        if got != self.dim {
            return Err(PolyError::DimensionMismatch {
                expected: self.dim,
                got,
            });
        }
        Ok(())
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (idx, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if c.im == 0.0 {
                write!(f, "{:.6e}", c.re)?;
            } else {
                write!(f, "({:.6e}{:+.6e}i)", c.re, c.im)?;
            }
            if idx.degree() > 0 {
                write!(f, "*{idx}")?;
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    exp: Vec<u32>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct PolyRepr {
    dim: usize,
    terms: Vec<TermRepr>,
}

impl From<Polynomial> for PolyRepr {
    fn from(p: Polynomial) -> Self {
        PolyRepr {
            dim: p.dim,
            terms: p
                .terms
                .into_iter()
                .map(|(idx, c)| TermRepr {
                    exp: idx.0,
                    re: c.re,
                    im: c.im,
                })
                .collect(),
        }
    }
}

impl TryFrom<PolyRepr> for Polynomial {
    type Error = PolyError;

    fn try_from(r: PolyRepr) -> Result<Self, Self::Error> {
        Polynomial::from_terms(
            r.dim,
            r.terms
                .into_iter()
                .map(|t| (t.exp, Complex64::new(t.re, t.im))),
        )
    }
}

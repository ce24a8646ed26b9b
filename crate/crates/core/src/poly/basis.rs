use super::legendre::{normalized_legendre_coeffs, unit_moment};
use super::multi_index::graded_indices;
use super::quadrature::tensor_quadrature;
use super::{Domain, MultiIndex, PolyError, Polynomial};
use nalgebra::DVector;
use num_complex::Complex64;
use std::collections::HashMap;

/// Orthonormal Legendre product basis of all total degrees `<= max_degree`
/// over a box domain, in graded multi-index order. Size is
/// `C(dim + max_degree, dim)`.
#[derive(Clone, Debug)]
pub struct BasisSet {
    domain: Domain,
    max_degree: u32,
    indices: Vec<MultiIndex>,
    pos: HashMap<Vec<u32>, usize>,
    unit_polys: Vec<Polynomial>,
    norm1d: Vec<Vec<f64>>,
}

impl BasisSet {
    pub fn new(dim: usize, max_degree: u32, domain: Domain) -> Result<Self, PolyError> {
        if domain.dim() != dim {
            return Err(PolyError::DimensionMismatch {
                expected: dim,
                got: domain.dim(),
            });
        }
        if max_degree > 32 {
            return Err(PolyError::DegreeTooLarge {
                degree: max_degree,
                limit: 32,
            });
        }
        let indices = graded_indices(dim, max_degree);
        let pos = indices
            .iter()
            .enumerate()
            .map(|(i, m)| (m.0.clone(), i))
            .collect();
        let norm1d: Vec<Vec<f64>> = (0..=max_degree).map(normalized_legendre_coeffs).collect();
        let unit_polys = indices
            .iter()
            .map(|mi| product_poly(dim, mi, &norm1d))
            .collect();
        Ok(BasisSet {
            domain,
            max_degree,
            indices,
            pos,
            unit_polys,
            norm1d,
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn position(&self, index: &MultiIndex) -> Option<usize> {
        self.pos.get(&index.0).copied()
    }

    /// Basis function `l` on the unit cube (orthonormal there).
    pub fn unit_poly(&self, l: usize) -> &Polynomial {
        &self.unit_polys[l]
    }

    /// Basis function `l` in state coordinates (orthonormal over the domain).
    pub fn state_poly(&self, l: usize) -> Polynomial {
        let inv_sqrt_v = 1.0 / self.domain.volume_factor().sqrt();
        let (a, b) = self.domain.state_to_unit_affine();
        self.unit_polys[l]
            .compose_affine(&a, &b)
            .scale(Complex64::new(inv_sqrt_v, 0.0))
    }

    /// Converts a state-coordinate polynomial to unit-cube coordinates.
    pub fn to_unit_coords(&self, f: &Polynomial) -> Result<Polynomial, PolyError> {
        if f.dim() != self.dim() {
            return Err(PolyError::DimensionMismatch {
                expected: self.dim(),
                got: f.dim(),
            });
        }
        let (a, b) = self.domain.unit_to_state_affine();
        Ok(f.compose_affine(&a, &b))
    }

    /// Converts a unit-cube polynomial back to state coordinates.
    pub fn from_unit_coords(&self, f_u: &Polynomial) -> Result<Polynomial, PolyError> {
        if f_u.dim() != self.dim() {
            return Err(PolyError::DimensionMismatch {
                expected: self.dim(),
                got: f_u.dim(),
            });
        }
        let (a, b) = self.domain.state_to_unit_affine();
        Ok(f_u.compose_affine(&a, &b))
    }

    /// Galerkin coefficients of a unit-cube polynomial against the
    /// orthonormal basis. Exact: uses per-axis tables
    /// `U[p][n] = int u^p Lhat_n du`, so a term contributes the product of
    /// univariate integrals.
    pub fn project_unit(&self, f_u: &Polynomial) -> Result<DVector<Complex64>, PolyError> {
        if f_u.dim() != self.dim() {
            return Err(PolyError::DimensionMismatch {
                expected: self.dim(),
                got: f_u.dim(),
            });
        }
        let pmax = f_u.degree() as usize;
        // U[p][n]
        let table: Vec<Vec<f64>> = (0..=pmax)
            .map(|p| {
                (0..=self.max_degree as usize)
                    .map(|n| {
                        self.norm1d[n]
                            .iter()
                            .enumerate()
                            .map(|(k, &c)| c * unit_moment((p + k) as u32))
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let mut out = DVector::from_element(self.len(), Complex64::new(0.0, 0.0));
        for (beta, &c) in f_u.terms() {
            for (l, alpha) in self.indices.iter().enumerate() {
                let mut factor = 1.0;
                for (&p, &n) in beta.as_slice().iter().zip(alpha.as_slice()) {
                    factor *= table[p as usize][n as usize];
                    if factor == 0.0 {
                        break;
                    }
                }
                if factor != 0.0 {
                    out[l] += c * factor;
                }
            }
        }
        Ok(out)
    }

    /// Galerkin coefficients of a state-coordinate polynomial:
    /// `a_l = <f, L_l>` over the domain.
    pub fn project_state(&self, f: &Polynomial) -> Result<DVector<Complex64>, PolyError> {
        let f_u = self.to_unit_coords(f)?;
        let mut a = self.project_unit(&f_u)?;
        let sqrt_v = Complex64::new(self.domain.volume_factor().sqrt(), 0.0);
        a *= sqrt_v;
        Ok(a)
    }

    /// Linear combination of unit-cube basis functions.
    pub fn reconstruct_unit(&self, coeffs: &DVector<Complex64>) -> Result<Polynomial, PolyError> {
        if coeffs.len() != self.len() {
            return Err(PolyError::DimensionMismatch {
                expected: self.len(),
                got: coeffs.len(),
            });
        }
        let mut out = Polynomial::zero(self.dim());
        for (l, c) in coeffs.iter().enumerate() {
            out.axpy(*c, &self.unit_polys[l]);
        }
        Ok(out)
    }

    /// Evaluates the full state-coordinate basis vector `L(x)`.
    pub fn evaluate_state(&self, x: &[Complex64]) -> Result<DVector<Complex64>, PolyError> {
        if x.len() != self.dim() {
            return Err(PolyError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let u = self.domain.to_unit_point(x);
        let inv_sqrt_v = Complex64::new(1.0 / self.domain.volume_factor().sqrt(), 0.0);
        let mut out = DVector::from_element(self.len(), Complex64::new(0.0, 0.0));
        for l in 0..self.len() {
            out[l] = inv_sqrt_v * self.unit_polys[l].evaluate(&u)?;
        }
        Ok(out)
    }
}

fn product_poly(dim: usize, index: &MultiIndex, norm1d: &[Vec<f64>]) -> Polynomial {
    let mut p = Polynomial::constant_re(dim, 1.0);
    for (axis, &n) in index.as_slice().iter().enumerate() {
        let coeffs = &norm1d[n as usize];
        let axis_poly = Polynomial::from_terms(
            dim,
            coeffs.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(k, &c)| {
                let mut exp = vec![0u32; dim];
                exp[axis] = k as u32;
                (exp, Complex64::new(c, 0.0))
            }),
        )
        .expect("exponent length is dim by construction");
        p = p.mul(&axis_poly).expect("same dim");
    }
    p
}

/// Normalized Legendre basis function for one multi-index in state
/// coordinates: unit L2 norm over the domain.
pub fn legendre_poly(index: &MultiIndex, domain: &Domain) -> Result<Polynomial, PolyError> {
    if index.dim() != domain.dim() {
        return Err(PolyError::DimensionMismatch {
            expected: domain.dim(),
            got: index.dim(),
        });
    }
    let max_n = index.as_slice().iter().copied().max().unwrap_or(0);
    let norm1d: Vec<Vec<f64>> = (0..=max_n).map(normalized_legendre_coeffs).collect();
    let unit = product_poly(index.dim(), index, &norm1d);
    let (a, b) = domain.state_to_unit_affine();
    let inv_sqrt_v = 1.0 / domain.volume_factor().sqrt();
    Ok(unit
        .compose_affine(&a, &b)
        .scale(Complex64::new(inv_sqrt_v, 0.0)))
}

/// Exact `int_domain f * g dx` by term-pair monomial integration. Bilinear:
/// no conjugation is applied to either argument.
pub fn inner_product(
    f: &Polynomial,
    g: &Polynomial,
    domain: &Domain,
) -> Result<Complex64, PolyError> {
    if f.dim() != domain.dim() || g.dim() != domain.dim() {
        return Err(PolyError::DimensionMismatch {
            expected: domain.dim(),
            got: if f.dim() != domain.dim() { f.dim() } else { g.dim() },
        });
    }
    // per-axis power integral tables up to the needed degree
    let deg = (f.degree() + g.degree()) as usize;
    let tables: Vec<Vec<f64>> = (0..domain.dim())
        .map(|axis| {
            (0..=deg)
                .map(|p| domain.monomial_integral(axis, p as u32))
                .collect()
        })
        .collect();
    let mut acc = Complex64::new(0.0, 0.0);
    for (a, ca) in f.terms() {
        for (b, cb) in g.terms() {
            let mut factor = 1.0;
            for (axis, (&pa, &pb)) in a.as_slice().iter().zip(b.as_slice()).enumerate() {
                factor *= tables[axis][(pa + pb) as usize];
                if factor == 0.0 {
                    break;
                }
            }
            if factor != 0.0 {
                acc += ca * cb * factor;
            }
        }
    }
    Ok(acc)
}

/// Same integral via tensor Gauss-Legendre quadrature of sufficient order.
/// Kept as an independent route for checking the analytic one.
pub fn inner_product_quadrature(
    f: &Polynomial,
    g: &Polynomial,
    domain: &Domain,
) -> Result<Complex64, PolyError> {
    if f.dim() != domain.dim() || g.dim() != domain.dim() {
        return Err(PolyError::DimensionMismatch {
            expected: domain.dim(),
            got: if f.dim() != domain.dim() { f.dim() } else { g.dim() },
        });
    }
    let nodes = ((f.degree() + g.degree()) as usize / 2 + 1).max(1);
    tensor_quadrature(domain, nodes, |x| {
        let fx = f.evaluate_real(x).expect("dim checked");
        let gx = g.evaluate_real(x).expect("dim checked");
        fx * gx
    })
}

/// Galerkin coefficient vector of `f` against the basis.
pub fn project(f: &Polynomial, basis: &BasisSet) -> Result<DVector<Complex64>, PolyError> {
    basis.project_state(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn re(c: Complex64) -> f64 {
        assert!(c.im.abs() < 1e-14);
        c.re
    }

    #[test]
    fn degree_zero_is_inverse_sqrt_volume() {
        let d = Domain::new(vec![0.0, -1.0], vec![2.0, 3.0]).unwrap();
        let p = legendre_poly(&MultiIndex::zeros(2), &d).unwrap();
        assert_eq!(p.num_terms(), 1);
        let v = p.evaluate_real(&[1.0, 0.0]).unwrap();
        assert!((v.re - 1.0 / 8f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn degree_one_on_unit_interval() {
        let d = Domain::unit(1);
        let p = legendre_poly(&MultiIndex::new(vec![1]), &d).unwrap();
        // sqrt(3/2) * x
        let c1 = p.coeff(&MultiIndex::new(vec![1]));
        assert!((c1.re - (1.5f64).sqrt()).abs() < 1e-14);
        assert_eq!(p.num_terms(), 1);
    }

    #[test]
    fn inner_product_x_x_unit_interval() {
        let d = Domain::unit(1);
        let x = Polynomial::variable(1, 0);
        let v = inner_product(&x, &x, &d).unwrap();
        assert!((re(v) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn basis_is_orthonormal_in_state_coordinates() {
        let domain = Domain::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        let basis = BasisSet::new(2, 4, domain.clone()).unwrap();
        for i in 0..basis.len() {
            let pi = basis.state_poly(i);
            for j in i..basis.len() {
                let pj = basis.state_poly(j);
                let g = re(inner_product(&pi, &pj, &domain).unwrap());
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (g - want).abs() < 1e-10,
                    "Gram[{i}][{j}] = {g}, want {want}"
                );
            }
        }
    }

    #[test]
    fn projection_of_x_squared_on_unit_interval() {
        // x^2 = (sqrt(2)/3) Lhat_0 + (4/15) sqrt(5/2) Lhat_2; values frozen
        // from the closed-form integrals and checked against quadrature below.
        let domain = Domain::unit(1);
        let basis = BasisSet::new(1, 3, domain.clone()).unwrap();
        let f = Polynomial::monomial(1, MultiIndex::new(vec![2]), Complex64::new(1.0, 0.0));
        let a = project(&f, &basis).unwrap();
        let expect = [0.47140452079103173, 0.0, 0.42163702135578396, 0.0];
        for (l, &want) in expect.iter().enumerate() {
            assert!(
                (a[l].re - want).abs() < 1e-14,
                "a[{l}] = {} want {want}",
                a[l].re
            );
            // independent quadrature route
            let lp = basis.state_poly(l);
            let q = inner_product_quadrature(&f, &lp, &domain).unwrap();
            assert!((a[l] - q).norm() < 1e-13);
        }
    }

    #[test]
    fn project_then_reconstruct_is_identity_on_span() {
        let domain = Domain::new(vec![-0.5, -2.0], vec![1.5, 1.0]).unwrap();
        let basis = BasisSet::new(2, 3, domain).unwrap();
        // f = 2 L_0 - 0.7 L_4 + 0.05 L_9
        let mut f = Polynomial::zero(2);
        for (l, w) in [(0usize, 2.0), (4, -0.7), (9, 0.05)] {
            f.axpy(Complex64::new(w, 0.0), &basis.state_poly(l));
        }
        let a = project(&f, &basis).unwrap();
        for (l, want) in [(0usize, 2.0), (4, -0.7), (9, 0.05)] {
            assert!((a[l].re - want).abs() < 1e-11);
        }
        let back = basis.from_unit_coords(&basis.reconstruct_unit(&a).unwrap()).unwrap()
            .scale(Complex64::new(1.0 / basis.domain().volume_factor().sqrt(), 0.0));
        for &p in &[[0.1, -1.0], [1.2, 0.3], [-0.4, -1.9]] {
            let lhs = back.evaluate_real(&p).unwrap();
            let rhs = f.evaluate_real(&p).unwrap();
            assert!((lhs - rhs).norm() < 1e-10 * (1.0 + rhs.norm()));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn analytic_and_quadrature_routes_agree(
            terms_f in proptest::collection::vec(((0u32..5, 0u32..5), -3.0f64..3.0), 1..6),
            terms_g in proptest::collection::vec(((0u32..4, 0u32..4), -3.0f64..3.0), 1..6),
            lo0 in -2.0f64..-0.1, hi0 in 0.1f64..2.0,
        ) {
            let domain = Domain::new(vec![lo0, -1.0], vec![hi0, 1.5]).unwrap();
            let f = Polynomial::from_terms(2, terms_f.into_iter()
                .map(|((a, b), v)| (vec![a, b], Complex64::new(v, 0.0)))).unwrap();
            let g = Polynomial::from_terms(2, terms_g.into_iter()
                .map(|((a, b), v)| (vec![a, b], Complex64::new(v, 0.0)))).unwrap();
            let exact = inner_product(&f, &g, &domain).unwrap();
            let quad = inner_product_quadrature(&f, &g, &domain).unwrap();
            let scale = 1.0_f64.max(exact.norm());
            prop_assert!((exact - quad).norm() <= 1e-12 * scale,
                "analytic {exact} vs quadrature {quad}");
        }
    }
}

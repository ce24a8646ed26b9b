use std::collections::HashMap;

use nalgebra::DMatrix;

use super::gaussian::{symmetrized, validate_covariance};
use super::MomentError;
use crate::poly::{graded_indices, MultiIndex, PolyError, Polynomial};

/// Default bound on the total order of requested moments. High orders are
/// cheap thanks to memoization, but an unexpected demand above this usually
/// means a degree blowup upstream, so it is an error rather than a truncation.
pub const DEFAULT_ORDER_CAP: u32 = 8;

/// Dimension bound from the packed memo key (8 bits per axis).
const MAX_DIM: usize = 16;

/// Central-moment calculator for a fixed zero-mean Gaussian: computes
/// `E[prod dx_i^{alpha_i}]` as a sum over covariance pairings, memoized on
/// the exponent vector so tensor loops and polynomial expectations share
/// work.
pub struct MomentEngine {
    p: DMatrix<f64>,
    cap: u32,
    memo: HashMap<u128, f64>,
}

impl MomentEngine {
    pub fn new(covariance: &DMatrix<f64>, cap: u32) -> Result<Self, MomentError> {
        if covariance.nrows() != covariance.ncols() {
            return Err(MomentError::DimensionMismatch {
                expected: covariance.nrows(),
                got: covariance.ncols(),
            });
        }
        if covariance.nrows() > MAX_DIM {
            return Err(MomentError::DimensionTooLarge {
                dim: covariance.nrows(),
                limit: MAX_DIM,
            });
        }
        if cap > u8::MAX as u32 {
            return Err(MomentError::OrderCap {
                order: cap,
                cap: u8::MAX as u32,
            });
        }
        validate_covariance(covariance)?;
        Ok(MomentEngine {
            p: symmetrized(covariance),
            cap,
            memo: HashMap::new(),
        })
    }

    pub fn with_default_cap(covariance: &DMatrix<f64>) -> Result<Self, MomentError> {
        Self::new(covariance, DEFAULT_ORDER_CAP)
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    /// `E[prod dx_i^{alpha_i}]`: zero for odd total order, the pairing sum
    /// otherwise.
    pub fn moment(&mut self, alpha: &[u32]) -> Result<f64, MomentError> {
        if alpha.len() != self.dim() {
            return Err(MomentError::DimensionMismatch {
                expected: self.dim(),
                got: alpha.len(),
            });
        }
        let order: u32 = alpha.iter().sum();
        if order > self.cap {
            return Err(MomentError::OrderCap { order, cap: self.cap });
        }
        if order % 2 == 1 {
            return Ok(0.0);
        }
        let mut counts = alpha.to_vec();
        Ok(self.moment_rec(&mut counts))
    }

    /// Pairing recursion: peel the first remaining factor, pair it with each
    /// distinct remaining variable, recurse. Parity is preserved, so every
    /// intermediate state is an even lattice point below the query and the
    /// memo stays small no matter how many pairings exist.
    fn moment_rec(&mut self, counts: &mut Vec<u32>) -> f64 {
        let Some(i0) = counts.iter().position(|&c| c > 0) else {
            return 1.0;
        };
        let key = pack(counts);
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        counts[i0] -= 1;
        let mut acc = 0.0;
        for v in 0..counts.len() {
            if counts[v] == 0 {
                continue;
            }
            let pv = self.p[(i0, v)];
            if pv != 0.0 {
                let mult = counts[v] as f64;
                counts[v] -= 1;
                acc += mult * pv * self.moment_rec(counts);
                counts[v] += 1;
            }
        }
        counts[i0] += 1;
        self.memo.insert(key, acc);
        acc
    }

    /// Computes and caches every even moment of total order `<= order`, so
    /// that read-only lookups (`expect_product_prefilled`) can run afterward,
    /// including from parallel loops.
    pub fn prefill(&mut self, order: u32) -> Result<(), MomentError> {
        if order > self.cap {
            return Err(MomentError::OrderCap { order, cap: self.cap });
        }
        // the recursion's base case never lands in the memo on its own
        self.memo.insert(pack(&vec![0; self.dim()]), 1.0);
        for mi in graded_indices(self.dim(), order) {
            if mi.degree() % 2 == 0 {
                self.moment(mi.as_slice())?;
            }
        }
        Ok(())
    }

    /// `E[p(dx)]` by linearity over the terms. The polynomial must be
    /// real up to a 1e-8 relative imaginary residual.
    pub fn expect(&mut self, p: &Polynomial) -> Result<f64, MomentError> {
        if p.dim() != self.dim() {
            return Err(MomentError::DimensionMismatch {
                expected: self.dim(),
                got: p.dim(),
            });
        }
        check_real(p)?;
        let mut acc = 0.0;
        for (mi, c) in p.terms() {
            if c.re != 0.0 {
                acc += c.re * self.moment(mi.as_slice())?;
            }
        }
        Ok(acc)
    }

    /// `E[f(dx) g(dx)]` without forming the product polynomial: iterates
    /// term pairs and looks up the moment of the summed exponents.
    ///
    /// Requires a prior `prefill` to at least `deg f + deg g`; this keeps the
    /// method `&self` so tensor loops can call it in parallel.
    pub(crate) fn expect_product_prefilled(
        &self,
        f: &Polynomial,
        g: &Polynomial,
    ) -> Result<f64, MomentError> {
        if f.dim() != self.dim() || g.dim() != self.dim() {
            return Err(MomentError::DimensionMismatch {
                expected: self.dim(),
                got: if f.dim() != self.dim() { f.dim() } else { g.dim() },
            });
        }
        let order = f.degree() + g.degree();
        if order > self.cap {
            return Err(MomentError::OrderCap { order, cap: self.cap });
        }
        check_real(f)?;
        check_real(g)?;
        // split g by term parity: odd-total pairs vanish
        let mut g_even: Vec<(&[u32], f64)> = Vec::new();
        let mut g_odd: Vec<(&[u32], f64)> = Vec::new();
        for (b, cb) in g.terms() {
            if cb.re != 0.0 {
                let bucket = if b.degree() % 2 == 0 { &mut g_even } else { &mut g_odd };
                bucket.push((b.as_slice(), cb.re));
            }
        }
        let d = self.dim();
        let mut counts = vec![0u32; d];
        let mut acc = 0.0;
        for (a, ca) in f.terms() {
            if ca.re == 0.0 {
                continue;
            }
            let bucket = if a.degree() % 2 == 0 { &g_even } else { &g_odd };
            for (b, cb) in bucket {
                for i in 0..d {
                    counts[i] = a.as_slice()[i] + b[i];
                }
                let m = self
                    .memo
                    .get(&pack(&counts))
                    .copied()
                    .expect("moment table prefilled to deg f + deg g");
                acc += ca.re * cb * m;
            }
        }
        Ok(acc)
    }
}

fn check_real(p: &Polynomial) -> Result<(), MomentError> {
    let residual = p.imag_residual();
    if residual >= 1e-8 {
        return Err(MomentError::Poly(PolyError::ImaginaryResidual {
            residual,
            tol: 1e-8,
        }));
    }
    Ok(())
}

fn pack(counts: &[u32]) -> u128 {
    let mut key: u128 = 0;
    for (i, &c) in counts.iter().enumerate() {
        key |= (c as u128) << (8 * i);
    }
    key
}

/// `E[prod dx_i^{alpha_i}]` for `dx ~ N(0, covariance)` under the default
/// order cap.
pub fn isserlis_moment(alpha: &MultiIndex, covariance: &DMatrix<f64>) -> Result<f64, MomentError> {
    MomentEngine::with_default_cap(covariance)?.moment(alpha.as_slice())
}

/// `E[p(dx)]` for `dx ~ N(0, covariance)` under the default order cap.
pub fn expect_polynomial(p: &Polynomial, covariance: &DMatrix<f64>) -> Result<f64, MomentError> {
    MomentEngine::with_default_cap(covariance)?.expect(p)
}

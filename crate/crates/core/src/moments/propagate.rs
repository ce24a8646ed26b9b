use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::isserlis::MomentEngine;
use super::{GaussianBelief, MomentError, DEFAULT_ORDER_CAP};
use crate::poly::Polynomial;

/// Dense symmetric rank-3 tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dim: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dim: usize) -> Self {
        Tensor3 { dim, data: vec![0.0; dim * dim * dim] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize, l: usize) -> f64 {
        self.data[(i * self.dim + j) * self.dim + l]
    }

    fn set(&mut self, i: usize, j: usize, l: usize, v: f64) {
        self.data[(i * self.dim + j) * self.dim + l] = v;
    }

    /// Writes `v` at every permutation of `(i, j, l)`.
    fn set_sym(&mut self, i: usize, j: usize, l: usize, v: f64) {
        for (a, b, c) in [(i, j, l), (i, l, j), (j, i, l), (j, l, i), (l, i, j), (l, j, i)] {
            self.set(a, b, c, v);
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
    }

    fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                for l in 0..self.dim {
                    let v = self.get(i, j, l);
                    for (a, b, c) in [(i, l, j), (j, i, l), (l, j, i)] {
                        worst = worst.max((v - self.get(a, b, c)).abs());
                    }
                }
            }
        }
        worst
    }
}

/// Dense symmetric rank-4 tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dim: usize,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(dim: usize) -> Self {
        Tensor4 { dim, data: vec![0.0; dim * dim * dim * dim] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize, l: usize, m: usize) -> f64 {
        self.data[((i * self.dim + j) * self.dim + l) * self.dim + m]
    }

    fn set(&mut self, i: usize, j: usize, l: usize, m: usize, v: f64) {
        self.data[((i * self.dim + j) * self.dim + l) * self.dim + m] = v;
    }

    /// Writes `v` at every permutation of `(i, j, l, m)`.
    fn set_sym(&mut self, i: usize, j: usize, l: usize, m: usize, v: f64) {
        let idx = [i, j, l, m];
        for p0 in 0..4 {
            for p1 in 0..4 {
                if p1 == p0 {
                    continue;
                }
                for p2 in 0..4 {
                    if p2 == p0 || p2 == p1 {
                        continue;
                    }
                    let p3 = 6 - p0 - p1 - p2;
                    self.set(idx[p0], idx[p1], idx[p2], idx[p3], v);
                }
            }
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
    }

    fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                for l in 0..self.dim {
                    for m in 0..self.dim {
                        let v = self.get(i, j, l, m);
                        for (a, b, c, d) in [(j, i, l, m), (i, l, j, m), (i, j, m, l), (m, j, l, i)] {
                            worst = worst.max((v - self.get(a, b, c, d)).abs());
                        }
                    }
                }
            }
        }
        worst
    }
}

/// Central moments of a propagated state distribution up to order `psi`:
/// mean, covariance, and (when requested) the full symmetric third- and
/// fourth-order central moment tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MomentSetRepr", into = "MomentSetRepr")]
pub struct CentralMomentSet {
    psi: u32,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    skewness: Option<Tensor3>,
    kurtosis: Option<Tensor4>,
}

impl CentralMomentSet {
    pub fn psi(&self) -> u32 {
        self.psi
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn skewness(&self) -> Option<&Tensor3> {
        self.skewness.as_ref()
    }

    pub fn kurtosis(&self) -> Option<&Tensor4> {
        self.kurtosis.as_ref()
    }

    /// Checks the structural invariants: tensor presence matching `psi` and
    /// permutation symmetry to 1e-10 relative.
    pub fn validate(&self) -> Result<(), MomentError> {
        if !(2..=4).contains(&self.psi) {
            return Err(MomentError::UnsupportedPsi { psi: self.psi });
        }
        if self.skewness.is_some() != (self.psi >= 3) || self.kurtosis.is_some() != (self.psi >= 4)
        {
            return Err(MomentError::UnsupportedPsi { psi: self.psi });
        }
        let q = self.dim();
        if self.covariance.nrows() != q || self.covariance.ncols() != q {
            return Err(MomentError::DimensionMismatch { expected: q, got: self.covariance.nrows() });
        }
        let cov_asym = (&self.covariance - self.covariance.transpose())
            .iter()
            .fold(0.0f64, |a, &v| a.max(v.abs()));
        let cov_scale = self.covariance.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        if cov_asym > 1e-10 * cov_scale.max(1e-300) {
            return Err(MomentError::NotSymmetric { max_asym: cov_asym });
        }
        if let Some(s) = &self.skewness {
            if s.dim() != q {
                return Err(MomentError::DimensionMismatch { expected: q, got: s.dim() });
            }
            if s.max_asymmetry() > 1e-10 * s.max_abs().max(1e-300) {
                return Err(MomentError::NotSymmetric { max_asym: s.max_asymmetry() });
            }
        }
        if let Some(k) = &self.kurtosis {
            if k.dim() != q {
                return Err(MomentError::DimensionMismatch { expected: q, got: k.dim() });
            }
            if k.max_asymmetry() > 1e-10 * k.max_abs().max(1e-300) {
                return Err(MomentError::NotSymmetric { max_asym: k.max_asymmetry() });
            }
        }
        Ok(())
    }
}

/// Propagates a Gaussian belief through flow polynomials expressed in the
/// deviation `dx` from the belief mean, returning exact central moments of
/// the (generally non-Gaussian) output distribution up to order `psi`.
pub fn propagate_moments(
    flows: &[Polynomial],
    belief: &GaussianBelief,
    psi: u32,
) -> Result<CentralMomentSet, MomentError> {
    if !(2..=4).contains(&psi) {
        return Err(MomentError::UnsupportedPsi { psi });
    }
    if flows.is_empty() {
        return Err(MomentError::DimensionMismatch { expected: 1, got: 0 });
    }
    let d_in = belief.dim();
    for f in flows {
        if f.dim() != d_in {
            return Err(MomentError::DimensionMismatch { expected: d_in, got: f.dim() });
        }
    }
    let q = flows.len();
    let max_deg = flows.iter().map(|f| f.degree()).max().unwrap_or(0);
    // the largest expectation formed below is a psi-fold product of flows
    let cap = (psi * max_deg).max(DEFAULT_ORDER_CAP);
    let mut engine = MomentEngine::new(belief.covariance(), cap)?;

    let flows: Vec<Polynomial> = flows
        .iter()
        .map(|f| f.realified(1e-8))
        .collect::<Result<_, _>>()?;

    let mut mean = DVector::zeros(q);
    for (i, f) in flows.iter().enumerate() {
        mean[i] = engine.expect(f)?;
    }
    let centered: Vec<Polynomial> = flows
        .iter()
        .zip(mean.iter())
        .map(|(f, &m)| f.add(&Polynomial::constant_re(d_in, -m)))
        .collect::<Result<_, _>>()?;

    engine.prefill(2 * max_deg)?;
    let mut covariance = DMatrix::zeros(q, q);
    for i in 0..q {
        for j in i..q {
            let v = engine.expect_product_prefilled(&centered[i], &centered[j])?;
            covariance[(i, j)] = v;
            covariance[(j, i)] = v;
        }
    }

    let mut skewness = None;
    let mut kurtosis = None;
    if psi >= 3 {
        engine.prefill(3 * max_deg)?;
        // pair products g_i g_j formed once and reused by both tensors
        let mut pair: Vec<Option<Polynomial>> = vec![None; q * q];
        for i in 0..q {
            for j in i..q {
                pair[i * q + j] = Some(centered[i].mul(&centered[j])?);
            }
        }
        let pair_ref = |i: usize, j: usize| pair[i * q + j].as_ref().expect("i <= j");

        let mut s = Tensor3::zeros(q);
        for i in 0..q {
            for j in i..q {
                for l in j..q {
                    let v = engine.expect_product_prefilled(pair_ref(i, j), &centered[l])?;
                    s.set_sym(i, j, l, v);
                }
            }
        }
        skewness = Some(s);

        if psi >= 4 {
            engine.prefill(4 * max_deg)?;
            let mut quads = Vec::new();
            for i in 0..q {
                for j in i..q {
                    for l in j..q {
                        for m in l..q {
                            quads.push((i, j, l, m));
                        }
                    }
                }
            }
            // read-only engine lookups after prefill: safe to parallelize,
            // and index order keeps the output deterministic
            let values: Vec<f64> = quads
                .par_iter()
                .map(|&(i, j, l, m)| engine.expect_product_prefilled(pair_ref(i, j), pair_ref(l, m)))
                .collect::<Result<_, _>>()?;
            let mut k = Tensor4::zeros(q);
            for (&(i, j, l, m), v) in quads.iter().zip(values) {
                k.set_sym(i, j, l, m, v);
            }
            kurtosis = Some(k);
        }
    }

    let out = CentralMomentSet { psi, mean, covariance, skewness, kurtosis };
    debug_assert!(out.validate().is_ok());
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct TensorRepr {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MomentSetRepr {
    psi: u32,
    mean: Vec<f64>,
    covariance: TensorRepr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    skewness: Option<TensorRepr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kurtosis: Option<TensorRepr>,
}

fn tensor_repr(shape: Vec<usize>, data: Vec<f64>) -> TensorRepr {
    TensorRepr { shape, data }
}

fn check_shape(repr: &TensorRepr, want: &[usize]) -> Result<(), MomentError> {
    let len: usize = want.iter().product();
    if repr.shape != want || repr.data.len() != len {
        return Err(MomentError::DimensionMismatch {
            expected: len,
            got: repr.data.len(),
        });
    }
    Ok(())
}

impl TryFrom<MomentSetRepr> for CentralMomentSet {
    type Error = MomentError;

    fn try_from(repr: MomentSetRepr) -> Result<Self, Self::Error> {
        let q = repr.mean.len();
        check_shape(&repr.covariance, &[q, q])?;
        let covariance = DMatrix::from_row_slice(q, q, &repr.covariance.data);
        let skewness = repr
            .skewness
            .map(|t| check_shape(&t, &[q, q, q]).map(|_| Tensor3 { dim: q, data: t.data }))
            .transpose()?;
        let kurtosis = repr
            .kurtosis
            .map(|t| check_shape(&t, &[q, q, q, q]).map(|_| Tensor4 { dim: q, data: t.data }))
            .transpose()?;
        let set = CentralMomentSet {
            psi: repr.psi,
            mean: DVector::from_vec(repr.mean),
            covariance,
            skewness,
            kurtosis,
        };
        set.validate()?;
        Ok(set)
    }
}

impl From<CentralMomentSet> for MomentSetRepr {
    fn from(set: CentralMomentSet) -> Self {
        let q = set.dim();
        MomentSetRepr {
            psi: set.psi,
            mean: set.mean.iter().copied().collect(),
            covariance: tensor_repr(
                vec![q, q],
                (0..q)
                    .flat_map(|i| (0..q).map(move |j| (i, j)))
                    .map(|(i, j)| set.covariance[(i, j)])
                    .collect(),
            ),
            skewness: set.skewness.map(|t| tensor_repr(vec![q, q, q], t.data)),
            kurtosis: set.kurtosis.map(|t| tensor_repr(vec![q, q, q, q], t.data)),
        }
    }
}

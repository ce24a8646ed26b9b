use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;

/// Exponent vector of one monomial, one entry per variable.
///
/// Ordering is graded: lower total degree first, and within a degree the
/// exponent vectors compare so that earlier variables carry higher powers
/// first (`x0^2 < x0*x1 < x1^2`). This is the order used everywhere a basis
/// or a serialized term list needs to be deterministic.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn new(exps: Vec<u32>) -> Self {
        MultiIndex(exps)
    }

    pub fn zeros(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    /// Unit exponent on variable `axis`.
    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut e = vec![0; dim];
        e[axis] = 1;
        MultiIndex(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            // reversed lexicographic comparison puts x0-heavy terms first
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.degree() == 0 {
            return write!(f, "1");
        }
        let mut first = true;
        for (i, &e) in self.0.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if e == 1 {
                write!(f, "x{i}")?;
            } else {
                write!(f, "x{i}^{e}")?;
            }
        }
        Ok(())
    }
}

/// All multi-indices of the given dimension with total degree at most
/// `max_degree`, in graded order. Length is C(dim + max_degree, dim).
pub fn graded_indices(dim: usize, max_degree: u32) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    let mut current = vec![0u32; dim];
    collect(dim, max_degree, 0, &mut current, &mut out);
    out.sort();
    out
}

fn collect(dim: usize, budget: u32, axis: usize, current: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    if axis == dim {
        out.push(MultiIndex(current.clone()));
        return;
    }
    for e in 0..=budget {
        current[axis] = e;
        collect(dim, budget - e, axis + 1, current, out);
    }
    current[axis] = 0;
}

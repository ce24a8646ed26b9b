use super::legendre::gauss_legendre;
use super::{Domain, PolyError};
use num_complex::Complex64;

/// Tensor-product Gauss-Legendre integral of `f` over the domain with
/// `nodes_per_axis` points on every axis. Cost grows as `n^d`; refuse grids
/// that would clearly never finish.
pub fn tensor_quadrature(
    domain: &Domain,
    nodes_per_axis: usize,
    mut f: impl FnMut(&[f64]) -> Complex64,
) -> Result<Complex64, PolyError> {
    let d = domain.dim();
    let total = (nodes_per_axis as f64).powi(d as i32);
    if total > 5e7 {
        return Err(PolyError::InvalidDomain(format!(
            "quadrature grid {nodes_per_axis}^{d} is too large"
        )));
    }
    let (u, w) = gauss_legendre(nodes_per_axis);
    let scale = domain.volume_factor();
    let mut idx = vec![0usize; d];
    let mut point = vec![0.0; d];
    let mut acc = Complex64::new(0.0, 0.0);
    loop {
        let mut weight = scale;
        for (axis, &k) in idx.iter().enumerate() {
            point[axis] = domain.center(axis) + domain.half_width(axis) * u[k];
            weight *= w[k];
        }
        acc += weight * f(&point);
        // odometer increment
        let mut axis = 0;
        loop {
            if axis == d {
                return Ok(acc);
            }
            idx[axis] += 1;
            if idx[axis] < nodes_per_axis {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_separable_polynomial() {
        let d = Domain::new(vec![0.0, -1.0], vec![2.0, 1.0]).unwrap();
        // int x^2 dx * int y^4 dy = (8/3) * (2/5)
        let got = tensor_quadrature(&d, 4, |p| {
            Complex64::new(p[0] * p[0] * p[1].powi(4), 0.0)
        })
        .unwrap();
        assert!((got.re - 8.0 / 3.0 * 2.0 / 5.0).abs() < 1e-13);
        assert_eq!(got.im, 0.0);
    }
}

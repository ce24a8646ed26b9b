use num_complex::Complex64;

use crate::poly::Polynomial;

/// Homogeneous solids `T_n(x, y, z) = rho^n P_n(x / rho)` with
/// `rho^2 = x^2 + y^2 + z^2`, generated by the three-term recursion
///
/// `T_n = ((2n-1)/n) x T_{n-1} - ((n-1)/n) rho^2 T_{n-2}`
///
/// from `T_0 = 1`, `T_1 = x`. Returns `T_0 ..= T_n_max`.
pub fn solid_legendre(n_max: u32) -> Vec<Polynomial> {
    let one = Complex64::new(1.0, 0.0);
    let x = Polynomial::variable(3, 0);
    let mut rho2 = Polynomial::zero(3);
    for axis in 0..3 {
        let v = Polynomial::variable(3, axis);
        rho2.axpy(one, &v.mul(&v).expect("same dimension"));
    }
    let mut out = Vec::with_capacity(n_max as usize + 1);
    out.push(Polynomial::constant_re(3, 1.0));
    if n_max == 0 {
        return out;
    }
    out.push(x.clone());
    for n in 2..=n_max as usize {
        let nf = n as f64;
        let mut t = x
            .mul(&out[n - 1])
            .expect("same dimension")
            .scale(Complex64::new((2.0 * nf - 1.0) / nf, 0.0));
        t.axpy(
            Complex64::new(-(nf - 1.0) / nf, 0.0),
            &rho2.mul(&out[n - 2]).expect("same dimension"),
        );
        out.push(t);
    }
    out
}

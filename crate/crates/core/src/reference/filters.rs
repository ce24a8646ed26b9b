//! Extended, iterated, and unscented Kalman baselines.
//!
//! The EKF and IKF propagate the mean and state-transition matrix jointly
//! by integrating the variational equations alongside the state; the UKF
//! pushes a sigma-point set through the same integrator and redraws it for
//! the update. All three consume the measurement models of [`crate::kof`],
//! so every filter in a comparison sees identical observation geometry and
//! noise.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use super::dynamics::{DifferentiableDynamics, Dynamics};
use super::rk78::{rk78_integrate, IntegratorConfig};
use super::ReferenceError;
use crate::kof::{FilterState, MeasurementModel};

/// Unscented transform parameters.
#[derive(Debug, Clone, Copy)]
pub struct UkfConfig {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UkfConfig {
    fn default() -> Self {
        Self { alpha: 1e-3, beta: 2.0, kappa: 0.0 }
    }
}

/// Gauss–Newton relinearization controls for the iterated filter.
#[derive(Debug, Clone, Copy)]
pub struct IkfConfig {
    pub max_iterations: u32,
    pub tol: f64,
}

impl Default for IkfConfig {
    fn default() -> Self {
        Self { max_iterations: 5, tol: 1e-10 }
    }
}

/// State plus column-major state-transition matrix, integrated together so
/// the linearization stays consistent with the nonlinear mean trajectory.
struct Variational<'a, D: ?Sized> {
    inner: &'a D,
}

impl<D: DifferentiableDynamics + ?Sized> Dynamics for Variational<'_, D> {
    fn dim(&self) -> usize {
        let d = self.inner.dim();
        d + d * d
    }

    fn rhs(&self, t: f64, state: &[f64]) -> Result<DVector<f64>, ReferenceError> {
        let d = self.inner.dim();
        let f = self.inner.rhs(t, &state[..d])?;
        let j = self.inner.jacobian(t, &state[..d])?;
        let phi = DMatrix::from_column_slice(d, d, &state[d..]);
        let phi_dot = j * phi;
        let mut out = DVector::zeros(d + d * d);
        out.rows_mut(0, d).copy_from(&f);
        out.rows_mut(d, d * d).copy_from_slice(phi_dot.as_slice());
        Ok(out)
    }
}

/// Integrates the mean and state-transition matrix over `dt` and maps the
/// covariance through the latter; returns the prediction and the transition
/// matrix itself.
pub fn ekf_predict<D: DifferentiableDynamics + ?Sized>(
    dynamics: &D,
    state: &FilterState,
    dt: f64,
    integrator: &IntegratorConfig,
) -> Result<(FilterState, DMatrix<f64>), ReferenceError> {
    let d = dynamics.dim();
    if state.dim() != d {
        return Err(ReferenceError::DimensionMismatch { expected: d, got: state.dim() });
    }
    if !dt.is_finite() || dt < 0.0 {
        return Err(ReferenceError::BadEpochs);
    }
    let mut z0 = DVector::zeros(d + d * d);
    z0.rows_mut(0, d).copy_from(state.mean());
    for i in 0..d {
        z0[d + i * d + i] = 1.0;
    }
    let var = Variational { inner: dynamics };
    let traj = rk78_integrate(&var, &z0, state.t(), &[state.t() + dt], integrator)?;
    let zf = traj.last();
    let mean = zf.rows(0, d).into_owned();
    let phi = DMatrix::from_column_slice(d, d, &zf.as_slice()[d..]);
    let cov = symmetrize(&phi * state.covariance() * phi.transpose());
    Ok((FilterState::new(state.t() + dt, mean, cov)?, phi))
}

/// One linearized prediction and, when an observation is present, a
/// Joseph-form update at the predicted mean. Returns the posterior and the
/// innovation.
pub fn ekf_step<D: DifferentiableDynamics + ?Sized>(
    dynamics: &D,
    meas: &MeasurementModel,
    state: &FilterState,
    dt: f64,
    y_obs: Option<&DVector<f64>>,
    integrator: &IntegratorConfig,
) -> Result<(FilterState, Option<DVector<f64>>), ReferenceError> {
    let (pred, _) = ekf_predict(dynamics, state, dt, integrator)?;
    let Some(y) = y_obs else { return Ok((pred, None)) };
    check_obs(meas, y)?;
    let x = pred.mean().clone();
    let h = meas.map().jacobian(x.as_slice())?;
    let y_hat = meas.map().eval(x.as_slice())?;
    let gain = kalman_gain(pred.covariance(), &h, meas.r())?;
    let innovation = y - y_hat;
    let mean = &x + &gain * &innovation;
    let cov = joseph_cov(pred.covariance(), &gain, &h, meas.r());
    Ok((FilterState::new(pred.t(), mean, cov)?, Some(innovation)))
}

/// Like [`ekf_step`], but the update relinearizes the measurement at the
/// running estimate: `eta` starts at the prior mean and each pass applies
/// the Gauss–Newton correction until it moves less than `tol` or the
/// iteration budget runs out. The covariance uses the gain and Jacobian of
/// the pass that produced the accepted estimate, so one iteration
/// reproduces the EKF exactly.
pub fn ikf_step<D: DifferentiableDynamics + ?Sized>(
    dynamics: &D,
    meas: &MeasurementModel,
    state: &FilterState,
    dt: f64,
    y_obs: Option<&DVector<f64>>,
    integrator: &IntegratorConfig,
    config: &IkfConfig,
) -> Result<(FilterState, Option<DVector<f64>>), ReferenceError> {
    let (pred, _) = ekf_predict(dynamics, state, dt, integrator)?;
    let Some(y) = y_obs else { return Ok((pred, None)) };
    check_obs(meas, y)?;
    let x_minus = pred.mean().clone();
    let p = pred.covariance();
    let mut eta = x_minus.clone();
    let mut innovation = None;
    let mut linearization = None;
    for _ in 0..config.max_iterations.max(1) {
        let h = meas.map().jacobian(eta.as_slice())?;
        let y_hat = meas.map().eval(eta.as_slice())?;
        if innovation.is_none() {
            innovation = Some(y - &y_hat);
        }
        let gain = kalman_gain(p, &h, meas.r())?;
        let eta_next = &x_minus + &gain * (y - &y_hat - &h * (&x_minus - &eta));
        let moved = (&eta_next - &eta).norm();
        eta = eta_next;
        linearization = Some((h, gain));
        if moved < config.tol {
            break;
        }
    }
    let (h, gain) = linearization.expect("at least one pass runs");
    let cov = joseph_cov(p, &gain, &h, meas.r());
    Ok((FilterState::new(pred.t(), eta, cov)?, innovation))
}

/// Sigma-point prediction and update. The prediction propagates `2d + 1`
/// points drawn from the prior through the integrator; the update redraws
/// the set from the predicted density before mapping it through the
/// measurement. No Jacobians are required.
pub fn ukf_step<D: Dynamics + ?Sized>(
    dynamics: &D,
    meas: &MeasurementModel,
    state: &FilterState,
    dt: f64,
    y_obs: Option<&DVector<f64>>,
    integrator: &IntegratorConfig,
    config: &UkfConfig,
) -> Result<(FilterState, Option<DVector<f64>>), ReferenceError> {
    let d = dynamics.dim();
    if state.dim() != d {
        return Err(ReferenceError::DimensionMismatch { expected: d, got: state.dim() });
    }
    if !dt.is_finite() || dt < 0.0 {
        return Err(ReferenceError::BadEpochs);
    }
    let (wm, wc, gamma) = unscented_weights(d, config)?;

    let chi = sigma_points(state.mean(), state.covariance(), gamma)?;
    let mut propagated = Vec::with_capacity(chi.len());
    for point in &chi {
        let traj = rk78_integrate(dynamics, point, state.t(), &[state.t() + dt], integrator)?;
        propagated.push(traj.last().clone());
    }
    let mean_pred = weighted_mean(&propagated, &wm);
    let cov_pred = symmetrize(weighted_cross_cov(
        &propagated, &mean_pred, &propagated, &mean_pred, &wc,
    ));
    let pred = FilterState::new(state.t() + dt, mean_pred.clone(), cov_pred)?;
    let Some(y) = y_obs else { return Ok((pred, None)) };
    check_obs(meas, y)?;

    let chi = sigma_points(&mean_pred, pred.covariance(), gamma)?;
    let mut images = Vec::with_capacity(chi.len());
    for point in &chi {
        images.push(meas.map().eval(point.as_slice())?);
    }
    let y_hat = weighted_mean(&images, &wm);
    let p_yy = symmetrize(weighted_cross_cov(&images, &y_hat, &images, &y_hat, &wc) + meas.r());
    let p_xy = weighted_cross_cov(&chi, &mean_pred, &images, &y_hat, &wc);
    let chol = Cholesky::new(p_yy.clone()).ok_or(ReferenceError::SingularInnovation)?;
    let gain = chol.solve(&p_xy.transpose()).transpose();
    let innovation = y - &y_hat;
    let mean = &mean_pred + &gain * &innovation;
    let cov = symmetrize(pred.covariance() - &gain * &p_yy * gain.transpose());
    Ok((FilterState::new(pred.t(), mean, cov)?, Some(innovation)))
}

fn check_obs(meas: &MeasurementModel, y: &DVector<f64>) -> Result<(), ReferenceError> {
    if y.len() != meas.len() {
        return Err(ReferenceError::DimensionMismatch { expected: meas.len(), got: y.len() });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(ReferenceError::NonFinite);
    }
    Ok(())
}

/// `K = P Hᵀ (H P Hᵀ + R)⁻¹` via a Cholesky solve of the innovation
/// covariance.
fn kalman_gain(
    p: &DMatrix<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>, ReferenceError> {
    let p_yy = symmetrize(h * p * h.transpose() + r);
    let chol = Cholesky::new(p_yy).ok_or(ReferenceError::SingularInnovation)?;
    Ok(chol.solve(&(h * p)).transpose())
}

fn joseph_cov(
    p: &DMatrix<f64>,
    gain: &DMatrix<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> DMatrix<f64> {
    let d = p.nrows();
    let ikh = DMatrix::identity(d, d) - gain * h;
    symmetrize(&ikh * p * ikh.transpose() + gain * r * gain.transpose())
}

fn unscented_weights(
    d: usize,
    cfg: &UkfConfig,
) -> Result<(Vec<f64>, Vec<f64>, f64), ReferenceError> {
    let n = d as f64;
    let lambda = cfg.alpha * cfg.alpha * (n + cfg.kappa) - n;
    let spread = n + lambda;
    if !(spread > 0.0) || !spread.is_finite() {
        return Err(ReferenceError::NonFinite);
    }
    let mut wm = vec![1.0 / (2.0 * spread); 2 * d + 1];
    let mut wc = wm.clone();
    wm[0] = lambda / spread;
    wc[0] = wm[0] + 1.0 - cfg.alpha * cfg.alpha + cfg.beta;
    Ok((wm, wc, spread.sqrt()))
}

fn sigma_points(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    gamma: f64,
) -> Result<Vec<DVector<f64>>, ReferenceError> {
    let chol = Cholesky::new(cov.clone()).ok_or_else(|| {
        let min_eig = SymmetricEigen::new(cov.clone()).eigenvalues.min();
        ReferenceError::NotPsd { min_eig }
    })?;
    let l = chol.l();
    let d = mean.len();
    let mut points = Vec::with_capacity(2 * d + 1);
    points.push(mean.clone());
    for sign in [1.0, -1.0] {
        for i in 0..d {
            let mut point = mean.clone();
            point.axpy(sign * gamma, &l.column(i).into_owned(), 1.0);
            points.push(point);
        }
    }
    Ok(points)
}

fn weighted_mean(points: &[DVector<f64>], w: &[f64]) -> DVector<f64> {
    let mut mean = DVector::zeros(points[0].len());
    for (point, &wi) in points.iter().zip(w) {
        mean.axpy(wi, point, 1.0);
    }
    mean
}

fn weighted_cross_cov(
    a: &[DVector<f64>],
    a_mean: &DVector<f64>,
    b: &[DVector<f64>],
    b_mean: &DVector<f64>,
    w: &[f64],
) -> DMatrix<f64> {
    let mut cov = DMatrix::zeros(a_mean.len(), b_mean.len());
    for i in 0..a.len() {
        let da = &a[i] - a_mean;
        let db = &b[i] - b_mean;
        cov.ger(w[i], &da, &db, 1.0);
    }
    cov
}

fn symmetrize(p: DMatrix<f64>) -> DMatrix<f64> {
    let pt = p.transpose();
    (p + pt) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kof::KofError;
    use crate::poly::Polynomial;
    use crate::reference::dynamics::LinearDynamics;
    use num_complex::Complex64;

    fn oscillator() -> LinearDynamics {
        LinearDynamics::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]))
    }

    fn rot(t: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[t.cos(), t.sin(), -t.sin(), t.cos()])
    }

    fn prior() -> FilterState {
        FilterState::new(
            0.0,
            DVector::from_column_slice(&[0.6, -0.1]),
            DMatrix::from_diagonal(&DVector::from_column_slice(&[0.04, 0.09])),
        )
        .unwrap()
    }

    fn position_meas(r: f64) -> MeasurementModel {
        MeasurementModel::linear(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_element(1, 1, r),
        )
        .unwrap()
    }

    /// `y = x1^2 + x2`, a smooth scalar with state-dependent Jacobian.
    struct SquareMap;

    impl crate::kof::MeasurementMap for SquareMap {
        fn state_dim(&self) -> usize {
            2
        }

        fn len(&self) -> usize {
            1
        }

        fn eval(&self, x: &[f64]) -> Result<DVector<f64>, KofError> {
            Ok(DVector::from_element(1, x[0] * x[0] + x[1]))
        }

        fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, KofError> {
            Ok(DMatrix::from_row_slice(1, 2, &[2.0 * x[0], 1.0]))
        }

        fn taylor(&self, center: &[f64], order: u32) -> Result<Vec<Polynomial>, KofError> {
            let mut terms = vec![
                (vec![0, 0], Complex64::new(center[0] * center[0] + center[1], 0.0)),
                (vec![1, 0], Complex64::new(2.0 * center[0], 0.0)),
                (vec![0, 1], Complex64::new(1.0, 0.0)),
            ];
            if order >= 2 {
                terms.push((vec![2, 0], Complex64::new(1.0, 0.0)));
            }
            Ok(vec![Polynomial::from_terms(2, terms)?])
        }
    }

    fn square_meas() -> MeasurementModel {
        MeasurementModel::new(Box::new(SquareMap), DMatrix::from_element(1, 1, 0.01), 2).unwrap()
    }

    #[test]
    fn transition_matrix_matches_the_rotation_flow() {
        let (pred, phi) =
            ekf_predict(&oscillator(), &prior(), 0.7, &IntegratorConfig::default()).unwrap();
        let exact = rot(0.7);
        assert!((&phi - &exact).norm() < 1e-10, "phi error {}", (&phi - &exact).norm());
        let mean_exact = exact * prior().mean();
        assert!((pred.mean() - mean_exact).norm() < 1e-10);
    }

    #[test]
    fn all_filters_match_the_classical_solution_on_a_linear_problem() {
        let dynamics = oscillator();
        let meas = position_meas(0.04);
        let integ = IntegratorConfig::default();
        let dt = 0.4;
        let steps = 10;

        let mut kf_mean = prior().mean().clone();
        let mut kf_cov = prior().covariance().clone();
        let mut ekf = prior();
        let mut ikf = prior();
        let mut ukf = prior();
        let h = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);

        for k in 0..steps {
            let y = DVector::from_element(
                1,
                0.8 * (0.4 * k as f64).cos() + 0.05 * (2.0 * k as f64).sin(),
            );

            let f = rot(dt);
            kf_mean = &f * kf_mean;
            kf_cov = &f * kf_cov * f.transpose();
            let p_yy = (&h * &kf_cov * h.transpose())[(0, 0)] + 0.04;
            let gain = &kf_cov * h.transpose() / p_yy;
            kf_mean = &kf_mean + &gain * (&y - &h * &kf_mean);
            kf_cov = &kf_cov - &gain * p_yy * gain.transpose();

            ekf = ekf_step(&dynamics, &meas, &ekf, dt, Some(&y), &integ).unwrap().0;
            ikf = ikf_step(&dynamics, &meas, &ikf, dt, Some(&y), &integ, &IkfConfig::default())
                .unwrap()
                .0;
            ukf = ukf_step(&dynamics, &meas, &ukf, dt, Some(&y), &integ, &UkfConfig::default())
                .unwrap()
                .0;

            for (name, state) in [("ekf", &ekf), ("ikf", &ikf), ("ukf", &ukf)] {
                assert!(
                    (state.mean() - &kf_mean).norm() < 1e-8,
                    "{name} mean diverged at step {k}: {}",
                    (state.mean() - &kf_mean).norm()
                );
                assert!(
                    (state.covariance() - &kf_cov).norm() < 1e-8,
                    "{name} covariance diverged at step {k}: {}",
                    (state.covariance() - &kf_cov).norm()
                );
            }
        }
    }

    #[test]
    fn a_single_gauss_newton_pass_is_the_ekf_update() {
        let dynamics = oscillator();
        let meas = square_meas();
        let integ = IntegratorConfig::default();
        let y = DVector::from_element(1, 0.5);
        let (ekf, ekf_innov) =
            ekf_step(&dynamics, &meas, &prior(), 0.4, Some(&y), &integ).unwrap();
        let one_pass = IkfConfig { max_iterations: 1, tol: 0.0 };
        let (ikf, ikf_innov) =
            ikf_step(&dynamics, &meas, &prior(), 0.4, Some(&y), &integ, &one_pass).unwrap();
        assert_eq!(ekf.mean(), ikf.mean());
        assert_eq!(ekf.covariance(), ikf.covariance());
        assert_eq!(ekf_innov.unwrap(), ikf_innov.unwrap());
    }

    #[test]
    fn gauss_newton_iterations_reach_a_fixed_point() {
        let dynamics = oscillator();
        let meas = square_meas();
        let integ = IntegratorConfig::default();
        // A modest innovation keeps the Gauss-Newton contraction fast
        // enough that five passes land on the fixed point.
        let y = DVector::from_element(1, 0.0);
        let few = IkfConfig { max_iterations: 5, tol: 1e-12 };
        let many = IkfConfig { max_iterations: 50, tol: 1e-12 };
        let (a, _) = ikf_step(&dynamics, &meas, &prior(), 0.4, Some(&y), &integ, &few).unwrap();
        let (b, _) = ikf_step(&dynamics, &meas, &prior(), 0.4, Some(&y), &integ, &many).unwrap();
        assert!((a.mean() - b.mean()).norm() < 1e-9, "not converged after five passes");
        // Relinearization must actually move the estimate off the EKF's.
        let (ekf, _) = ekf_step(&dynamics, &meas, &prior(), 0.4, Some(&y), &integ).unwrap();
        assert!((a.mean() - ekf.mean()).norm() > 1e-6);
    }

    #[test]
    fn missing_observations_reduce_to_pure_prediction() {
        let dynamics = oscillator();
        let meas = position_meas(0.04);
        let integ = IntegratorConfig::default();
        let (pred, _) = ekf_predict(&dynamics, &prior(), 0.4, &integ).unwrap();
        let (e, ei) = ekf_step(&dynamics, &meas, &prior(), 0.4, None, &integ).unwrap();
        let (i, ii) =
            ikf_step(&dynamics, &meas, &prior(), 0.4, None, &integ, &IkfConfig::default())
                .unwrap();
        let (u, ui) =
            ukf_step(&dynamics, &meas, &prior(), 0.4, None, &integ, &UkfConfig::default())
                .unwrap();
        assert!(ei.is_none() && ii.is_none() && ui.is_none());
        assert_eq!(e.mean(), pred.mean());
        assert_eq!(i.mean(), pred.mean());
        assert!((u.mean() - pred.mean()).norm() < 1e-8);
        assert!((u.covariance() - pred.covariance()).norm() < 1e-8);
    }

    #[test]
    fn observation_shape_and_content_are_checked() {
        let dynamics = oscillator();
        let meas = position_meas(0.04);
        let integ = IntegratorConfig::default();
        let bad_len = DVector::from_column_slice(&[1.0, 2.0]);
        assert!(matches!(
            ekf_step(&dynamics, &meas, &prior(), 0.4, Some(&bad_len), &integ),
            Err(ReferenceError::DimensionMismatch { expected: 1, got: 2 })
        ));
        let bad_val = DVector::from_element(1, f64::NAN);
        assert!(matches!(
            ekf_step(&dynamics, &meas, &prior(), 0.4, Some(&bad_val), &integ),
            Err(ReferenceError::NonFinite)
        ));
    }
}

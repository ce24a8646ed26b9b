use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use super::measurement::MeasurementModel;
use super::{FilterState, KofError};
use crate::koopman::{KoopmanModel, ObservableSet};
use crate::moments::{propagate_moments, CentralMomentSet, GaussianBelief, MomentEngine, MomentError};
use crate::poly::{MultiIndex, Polynomial};

/// Affine change of coordinates between the physical state frame and the
/// frame the spectral model is built in: `w = A_to x + b_to` and
/// `x = A_from w + b_from`, validated to be mutual inverses.
#[derive(Debug, Clone)]
pub struct FrameMap {
    a_to: DMatrix<f64>,
    b_to: DVector<f64>,
    a_from: DMatrix<f64>,
    b_from: DVector<f64>,
}

impl FrameMap {
    pub fn identity(dim: usize) -> Self {
        FrameMap {
            a_to: DMatrix::identity(dim, dim),
            b_to: DVector::zeros(dim),
            a_from: DMatrix::identity(dim, dim),
            b_from: DVector::zeros(dim),
        }
    }

    pub fn new(
        a_to: DMatrix<f64>,
        b_to: DVector<f64>,
        a_from: DMatrix<f64>,
        b_from: DVector<f64>,
    ) -> Result<Self, KofError> {
        let d = a_to.nrows();
        for (rows, cols) in [(a_to.ncols(), d), (a_from.nrows(), d), (a_from.ncols(), d)] {
            if rows != cols {
                return Err(KofError::DimensionMismatch { expected: cols, got: rows });
            }
        }
        if b_to.len() != d || b_from.len() != d {
            return Err(KofError::DimensionMismatch { expected: d, got: b_to.len().max(b_from.len()) });
        }
        let finite = a_to.iter().chain(a_from.iter()).all(|v| v.is_finite())
            && b_to.iter().chain(b_from.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(KofError::NonFinite);
        }
        // x -> w -> x must come back exactly: A_from A_to = I, A_from b_to + b_from = 0
        let rt = &a_from * &a_to;
        let off = &a_from * &b_to + &b_from;
        let mut residual = off.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        for i in 0..d {
            for j in 0..d {
                let expect = if i == j { 1.0 } else { 0.0 };
                residual = residual.max((rt[(i, j)] - expect).abs());
            }
        }
        let scale = a_to
            .iter()
            .chain(a_from.iter())
            .fold(1.0_f64, |a, v| a.max(v.abs()));
        if residual > 1e-10 * scale {
            return Err(KofError::FrameInconsistent { residual });
        }
        Ok(FrameMap { a_to, b_to, a_from, b_from })
    }

    pub fn dim(&self) -> usize {
        self.b_to.len()
    }

    pub fn to_model(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a_to * x + &self.b_to
    }

    pub fn from_model(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.a_from * w + &self.b_from
    }

    pub fn cov_to_model(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrized(&self.a_to * p * self.a_to.transpose())
    }

    pub fn cov_from_model(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrized(&self.a_from * p * self.a_from.transpose())
    }

    pub fn a_from(&self) -> &DMatrix<f64> {
        &self.a_from
    }

    pub fn b_from(&self) -> &DVector<f64> {
        &self.b_from
    }
}

/// Everything the filter needs besides the measurement: the spectral model,
/// the frame it was built in, the prediction moment order, and whether the
/// expansion center follows the estimate after each update.
pub struct KofConfig<'a> {
    model: &'a KoopmanModel,
    frames: FrameMap,
    identity_obs: ObservableSet,
    psi: u32,
    re_center: bool,
}

impl<'a> KofConfig<'a> {
    pub fn new(
        model: &'a KoopmanModel,
        frames: FrameMap,
        psi: u32,
        re_center: bool,
    ) -> Result<Self, KofError> {
        if frames.dim() != model.basis().dim() {
            return Err(KofError::DimensionMismatch {
                expected: model.basis().dim(),
                got: frames.dim(),
            });
        }
        if !(2..=4).contains(&psi) {
            return Err(MomentError::UnsupportedPsi { psi }.into());
        }
        let identity_obs = ObservableSet::identity(model.basis())?;
        Ok(KofConfig { model, frames, identity_obs, psi, re_center })
    }

    pub fn model(&self) -> &KoopmanModel {
        self.model
    }

    pub fn frames(&self) -> &FrameMap {
        &self.frames
    }

    pub fn psi(&self) -> u32 {
        self.psi
    }

    pub fn re_center(&self) -> bool {
        self.re_center
    }
}

/// A prediction step's full output: the predicted state plus the flow
/// polynomials (physical coordinates, zero-mean model-frame deviation as the
/// variable) and the expansion geometry the measurement update needs.
pub struct Prediction {
    state: FilterState,
    flows: Vec<Polynomial>,
    center_w: DVector<f64>,
    offset_w: DVector<f64>,
    cov_w: DMatrix<f64>,
    x_bar: DVector<f64>,
    dt: f64,
}

impl Prediction {
    pub fn state(&self) -> &FilterState {
        &self.state
    }

    /// Physical-frame flow polynomials in the zero-mean deviation variable.
    pub fn flows(&self) -> &[Polynomial] {
        &self.flows
    }

    pub fn center_w(&self) -> &DVector<f64> {
        &self.center_w
    }

    pub fn cov_w(&self) -> &DMatrix<f64> {
        &self.cov_w
    }

    /// Deterministic image of the estimate: the flow evaluated at zero
    /// deviation, i.e. the point the measurement expansion is anchored at.
    pub fn x_bar(&self) -> &DVector<f64> {
        &self.x_bar
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
}

/// Predicts the belief over `dt`, expanding the flow about the current
/// estimate.
pub fn predict(cfg: &KofConfig, state: &FilterState, dt: f64) -> Result<Prediction, KofError> {
    let center_w = cfg.frames.to_model(state.mean());
    predict_at(cfg, state, dt, &center_w)
}

/// Prediction about an explicit model-frame center; the estimate may sit
/// away from the center when re-centering is off or updates are sparse.
fn predict_at(
    cfg: &KofConfig,
    state: &FilterState,
    dt: f64,
    center_w: &DVector<f64>,
) -> Result<Prediction, KofError> {
    let d = cfg.frames.dim();
    if state.dim() != d {
        return Err(KofError::DimensionMismatch { expected: d, got: state.dim() });
    }
    if !dt.is_finite() {
        return Err(KofError::NonFinite);
    }
    let mean_w = cfg.frames.to_model(state.mean());
    let cov_w = cfg.frames.cov_to_model(state.covariance());
    let offset_w = &mean_w - center_w;
    let flows = physical_flows(cfg, center_w, &offset_w, dt)?;

    let belief = GaussianBelief::new(DVector::zeros(d), cov_w.clone())?;
    let moments = propagate_moments(&flows, &belief, cfg.psi)?;
    let state_minus =
        FilterState::new(state.t() + dt, moments.mean().clone(), moments.covariance().clone())?;

    let zero = MultiIndex::zeros(d);
    let x_bar = DVector::from_iterator(d, flows.iter().map(|f| f.coeff(&zero).re));

    Ok(Prediction {
        state: state_minus,
        flows,
        center_w: center_w.clone(),
        offset_w,
        cov_w,
        x_bar,
        dt,
    })
}

/// Flow polynomials of the state observables in physical coordinates, as
/// functions of the zero-mean model-frame deviation: expand at `center_w`,
/// shift the argument by `offset_w` (estimate minus center), then map the
/// outputs through the physical frame.
fn physical_flows(
    cfg: &KofConfig,
    center_w: &DVector<f64>,
    offset_w: &DVector<f64>,
    dt: f64,
) -> Result<Vec<Polynomial>, KofError> {
    let model_flows = cfg
        .model
        .shifted_flow(&cfg.identity_obs, dt, center_w.as_slice())?;
    let shifted = shift_offset(model_flows, offset_w)?;
    let d = cfg.frames.dim();
    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        let mut p = Polynomial::constant_re(d, cfg.frames.b_from[i]);
        for (j, fj) in shifted.iter().enumerate() {
            let c = cfg.frames.a_from[(i, j)];
            if c != 0.0 {
                p = p.add(&fj.scale(Complex64::new(c, 0.0)))?;
            }
        }
        out.push(p);
    }
    Ok(out)
}

fn shift_offset(polys: Vec<Polynomial>, offset_w: &DVector<f64>) -> Result<Vec<Polynomial>, KofError> {
    if offset_w.iter().all(|&v| v == 0.0) {
        return Ok(polys);
    }
    let shifted: Result<Vec<_>, _> = polys
        .iter()
        .map(|p| p.shift_center_real(offset_w.as_slice()))
        .collect();
    Ok(shifted?)
}

/// One-shot moment propagation of a Gaussian belief over `dt`, expanded at
/// the belief mean, with output central moments up to order `psi`.
pub fn propagate_belief(
    cfg: &KofConfig,
    belief: &GaussianBelief,
    dt: f64,
    psi: u32,
) -> Result<CentralMomentSet, KofError> {
    let d = cfg.frames.dim();
    if belief.dim() != d {
        return Err(KofError::DimensionMismatch { expected: d, got: belief.dim() });
    }
    if !dt.is_finite() {
        return Err(KofError::NonFinite);
    }
    let center_w = cfg.frames.to_model(belief.mean());
    let cov_w = cfg.frames.cov_to_model(belief.covariance());
    let zero = DVector::zeros(d);
    let flows = physical_flows(cfg, &center_w, &zero, dt)?;
    let model_belief = GaussianBelief::new(zero, cov_w)?;
    Ok(propagate_moments(&flows, &model_belief, psi)?)
}

/// Builds the per-channel measurement flow polynomials for a prediction:
/// the sensor map is Taylor-expanded at the predicted center, re-expressed
/// as observables of the model frame, projected onto the basis, and flowed
/// through the same spectral map as the state.
pub fn measurement_polynomial(
    cfg: &KofConfig,
    meas: &MeasurementModel,
    pred: &Prediction,
) -> Result<Vec<Polynomial>, KofError> {
    let d = cfg.frames.dim();
    if meas.state_dim() != d {
        return Err(KofError::DimensionMismatch { expected: d, got: meas.state_dim() });
    }
    let local = meas.map().taylor(pred.x_bar.as_slice(), meas.taylor_order())?;
    // the expansions are in the physical deviation from x_bar; substitute
    // delta_x = A_from w + (b_from - x_bar) to get observables of the
    // absolute model-frame state
    let a = cfg.frames.a_from.map(|v| Complex64::new(v, 0.0));
    let b = (&cfg.frames.b_from - &pred.x_bar).map(|v| Complex64::new(v, 0.0));
    let in_w: Vec<Polynomial> = local.iter().map(|p| p.compose_affine(&a, &b)).collect();
    let obs = ObservableSet::project(in_w, cfg.model.basis())?;
    let y_flows = cfg
        .model
        .shifted_flow(&obs, pred.dt, pred.center_w.as_slice())?;
    shift_offset(y_flows, &pred.offset_w)
}

/// Folds an observation into a prediction: moment-based innovation and
/// cross covariances, minimum-mean-square-error gain, symmetrized and
/// eigenvalue-floored posterior. Returns the posterior and the innovation.
pub fn update(
    pred: &Prediction,
    y_polys: &[Polynomial],
    meas: &MeasurementModel,
    y_obs: &DVector<f64>,
) -> Result<(FilterState, DVector<f64>), KofError> {
    let q = meas.len();
    let d = pred.state.dim();
    if y_polys.len() != q {
        return Err(KofError::DimensionMismatch { expected: q, got: y_polys.len() });
    }
    if y_obs.len() != q {
        return Err(KofError::DimensionMismatch { expected: q, got: y_obs.len() });
    }
    if y_obs.iter().any(|v| !v.is_finite()) {
        return Err(KofError::NonFinite);
    }
    for p in y_polys {
        if p.dim() != d {
            return Err(KofError::DimensionMismatch { expected: d, got: p.dim() });
        }
    }

    let max_deg = pred
        .flows
        .iter()
        .chain(y_polys)
        .map(Polynomial::degree)
        .max()
        .unwrap_or(0);
    let mut engine = MomentEngine::new(&pred.cov_w, 2 * max_deg)?;
    engine.prefill(2 * max_deg)?;

    let mut y_hat = DVector::zeros(q);
    for (i, p) in y_polys.iter().enumerate() {
        y_hat[i] = engine.expect(p)?;
    }

    let centered = |polys: &[Polynomial], means: &DVector<f64>| -> Result<Vec<Polynomial>, KofError> {
        polys
            .iter()
            .zip(means.iter())
            .map(|(p, &m)| Ok(p.add(&Polynomial::constant_re(d, -m))?))
            .collect()
    };
    let xc = centered(&pred.flows, pred.state.mean())?;
    let yc = centered(y_polys, &y_hat)?;

    let mut p_yy = DMatrix::zeros(q, q);
    for i in 0..q {
        for j in i..q {
            let v = engine.expect_product_prefilled(&yc[i], &yc[j])?;
            p_yy[(i, j)] = v;
            p_yy[(j, i)] = v;
        }
    }
    p_yy += meas.r();

    let mut p_xy = DMatrix::zeros(d, q);
    for i in 0..d {
        for j in 0..q {
            p_xy[(i, j)] = engine.expect_product_prefilled(&xc[i], &yc[j])?;
        }
    }

    let chol = Cholesky::new(p_yy.clone()).ok_or(KofError::SingularInnovation)?;
    let gain = chol.solve(&p_xy.transpose()).transpose();

    let innovation = y_obs - &y_hat;
    let mean_plus = pred.state.mean() + &gain * &innovation;
    let p_plus = pred.state.covariance() - &gain * &p_yy * gain.transpose();
    let p_plus = floor_psd(&symmetrized(p_plus))?;
    let state = FilterState::new(pred.state.t(), mean_plus, p_plus)?;
    Ok((state, innovation))
}

/// Clips tiny negative eigenvalues (down to `-1e-10 trace`) to zero;
/// anything more negative is a genuine loss of positive semidefiniteness.
fn floor_psd(p: &DMatrix<f64>) -> Result<DMatrix<f64>, KofError> {
    let floor = -1e-10 * p.trace().abs().max(1e-300);
    let eig = SymmetricEigen::new(p.clone());
    let min_eig = eig.eigenvalues.min();
    if min_eig < floor {
        return Err(KofError::NotPsd { min_eig });
    }
    if min_eig >= 0.0 {
        return Ok(p.clone());
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let q = &eig.eigenvectors;
    Ok(symmetrized(q * DMatrix::from_diagonal(&clipped) * q.transpose()))
}

fn symmetrized(p: DMatrix<f64>) -> DMatrix<f64> {
    (&p + p.transpose()) * 0.5
}

/// One epoch of a filtering run: the time to advance to and, optionally, an
/// observation to fold in there.
#[derive(Debug, Clone)]
pub struct Epoch {
    pub t: f64,
    pub y: Option<DVector<f64>>,
}

/// Filter output at one epoch; the innovation is present when an
/// observation was processed.
#[derive(Debug, Clone)]
pub struct FilterStep {
    pub state: FilterState,
    pub innovation: Option<DVector<f64>>,
}

/// Alternates predict and update over the epoch sequence. The expansion
/// center starts at the prior estimate and, when re-centering is on, moves
/// to each updated estimate; prediction-only epochs never move it.
pub fn run_filter(
    cfg: &KofConfig,
    meas: &MeasurementModel,
    prior: &FilterState,
    epochs: &[Epoch],
) -> Result<Vec<FilterStep>, KofError> {
    if prior.dim() != cfg.frames.dim() {
        return Err(KofError::DimensionMismatch {
            expected: cfg.frames.dim(),
            got: prior.dim(),
        });
    }
    let mut prev = prior.t();
    for (k, e) in epochs.iter().enumerate() {
        let ordered = if k == 0 { e.t >= prev } else { e.t > prev };
        if !e.t.is_finite() || !ordered {
            return Err(KofError::EpochOrder);
        }
        if let Some(y) = &e.y {
            if y.len() != meas.len() {
                return Err(KofError::DimensionMismatch { expected: meas.len(), got: y.len() });
            }
        }
        prev = e.t;
    }

    let mut state = prior.clone();
    let mut center_w = cfg.frames.to_model(prior.mean());
    let mut out = Vec::with_capacity(epochs.len());
    for e in epochs {
        let dt = e.t - state.t();
        let pred = predict_at(cfg, &state, dt, &center_w)?;
        let innovation = match &e.y {
            Some(y) => {
                let y_polys = measurement_polynomial(cfg, meas, &pred)?;
                let (post, innovation) = update(&pred, &y_polys, meas, y)?;
                state = post;
                if cfg.re_center {
                    center_w = cfg.frames.to_model(state.mean());
                }
                Some(innovation)
            }
            None => {
                state = pred.state;
                None
            }
        };
        out.push(FilterStep { state: state.clone(), innovation });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::koopman::VectorField;
    use crate::poly::{BasisSet, Domain};

    fn box2() -> Domain {
        Domain::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap()
    }

    /// Harmonic oscillator: exact linear dynamics the spectral model
    /// reproduces to rounding, so classical Kalman algebra is the oracle.
    fn oscillator(max_degree: u32) -> KoopmanModel {
        let comps = vec![
            Polynomial::variable(2, 1),
            Polynomial::variable(2, 0).scale(Complex64::new(-1.0, 0.0)),
        ];
        let field = VectorField::new(comps, box2()).unwrap();
        let basis = BasisSet::new(2, max_degree, box2()).unwrap();
        KoopmanModel::build(field, basis).unwrap()
    }

    fn rot(t: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[t.cos(), t.sin(), -t.sin(), t.cos()])
    }

    fn max_abs_diff_v(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (a - b).iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn max_abs_diff_m(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn prior_state() -> FilterState {
        FilterState::new(
            0.0,
            DVector::from_vec(vec![0.6, -0.1]),
            DMatrix::from_row_slice(2, 2, &[0.04, 0.0, 0.0, 0.09]),
        )
        .unwrap()
    }

    #[test]
    fn matches_a_classical_kalman_filter_on_linear_dynamics() {
        let model = oscillator(3);
        let cfg = KofConfig::new(&model, FrameMap::identity(2), 2, true).unwrap();
        let h = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let r = 0.04;
        let meas = MeasurementModel::linear(h.clone(), DMatrix::from_element(1, 1, r)).unwrap();

        let dt = 0.4;
        let f = rot(dt);
        let mut truth = DVector::from_vec(vec![0.8, -0.3]);
        let mut state = prior_state();
        let mut kf_m = state.mean().clone();
        let mut kf_p = state.covariance().clone();

        for k in 0..25 {
            truth = &f * truth;
            let y_val = truth[0] + 0.05 * ((k as f64) * 3.7 + 0.3).sin();
            let y = DVector::from_element(1, y_val);

            kf_m = &f * kf_m;
            kf_p = &f * kf_p * f.transpose();
            let s = (&h * &kf_p * h.transpose())[(0, 0)] + r;
            let gain = &kf_p * h.transpose() / s;
            kf_m += &gain * (y_val - kf_m[0]);
            kf_p -= &gain * s * gain.transpose();

            let pred = predict(&cfg, &state, dt).unwrap();
            let y_polys = measurement_polynomial(&cfg, &meas, &pred).unwrap();
            let (post, _) = update(&pred, &y_polys, &meas, &y).unwrap();
            state = post;

            assert!(max_abs_diff_v(state.mean(), &kf_m) < 1e-8, "step {k} mean");
            assert!(max_abs_diff_m(state.covariance(), &kf_p) < 1e-8, "step {k} cov");
        }
    }

    #[test]
    fn zero_time_prediction_is_the_identity() {
        let model = oscillator(3);
        let cfg = KofConfig::new(&model, FrameMap::identity(2), 2, true).unwrap();
        let state = prior_state();
        let pred = predict(&cfg, &state, 0.0).unwrap();
        assert!(max_abs_diff_v(pred.state().mean(), state.mean()) < 1e-10);
        assert!(max_abs_diff_m(pred.state().covariance(), state.covariance()) < 1e-10);
        assert!(max_abs_diff_v(pred.x_bar(), state.mean()) < 1e-10);
    }

    #[test]
    fn uninformative_measurement_leaves_the_estimate() {
        let model = oscillator(3);
        let cfg = KofConfig::new(&model, FrameMap::identity(2), 2, true).unwrap();
        let meas = MeasurementModel::linear(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_element(1, 1, 1e12),
        )
        .unwrap();
        let pred = predict(&cfg, &prior_state(), 0.4).unwrap();
        let y_polys = measurement_polynomial(&cfg, &meas, &pred).unwrap();
        let y = DVector::from_element(1, 5.0);
        let (post, _) = update(&pred, &y_polys, &meas, &y).unwrap();
        let scale = pred.state().mean().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        assert!(max_abs_diff_v(post.mean(), pred.state().mean()) < 1e-6 * scale);
        assert!(post.covariance().trace() <= pred.state().covariance().trace() + 1e-12);
    }

    #[test]
    fn near_perfect_measurement_pins_the_state() {
        let model = oscillator(3);
        let cfg = KofConfig::new(&model, FrameMap::identity(2), 2, true).unwrap();
        let meas = MeasurementModel::linear(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2) * 1e-12,
        )
        .unwrap();
        let pred = predict(&cfg, &prior_state(), 0.4).unwrap();
        let y_polys = measurement_polynomial(&cfg, &meas, &pred).unwrap();
        let y = DVector::from_vec(vec![0.5, -0.2]);
        let (post, _) = update(&pred, &y_polys, &meas, &y).unwrap();
        assert!(post.covariance()[(0, 0)] <= 1e-10);
        assert!(post.covariance()[(1, 1)] <= 1e-10);
        assert!(max_abs_diff_v(post.mean(), &y) < 1e-6);
    }

    #[test]
    fn identity_observables_reproduce_the_state_flow() {
        let model = oscillator(3);
        let cfg = KofConfig::new(&model, FrameMap::identity(2), 2, true).unwrap();
        let meas = MeasurementModel::linear(DMatrix::identity(2, 2), DMatrix::identity(2, 2))
            .unwrap();
        let pred = predict(&cfg, &prior_state(), 0.7).unwrap();
        let y_polys = measurement_polynomial(&cfg, &meas, &pred).unwrap();
        for (yp, fp) in y_polys.iter().zip(pred.flows()) {
            let diff = yp.sub(fp).unwrap();
            let worst = diff
                .terms()
                .map(|(_, c)| c.norm())
                .fold(0.0_f64, f64::max);
            assert!(worst < 1e-10, "coefficient mismatch {worst}");
        }
    }

    #[test]
    fn filter_without_observations_is_pure_propagation() {
        let model = oscillator(3);
        let cfg = KofConfig::new(&model, FrameMap::identity(2), 2, true).unwrap();
        let meas = MeasurementModel::linear(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_element(1, 1, 0.01),
        )
        .unwrap();
        let prior = prior_state();
        let epochs: Vec<Epoch> = [0.3, 0.6, 0.9]
            .iter()
            .map(|&t| Epoch { t, y: None })
            .collect();
        let steps = run_filter(&cfg, &meas, &prior, &epochs).unwrap();
        let belief =
            GaussianBelief::new(prior.mean().clone(), prior.covariance().clone()).unwrap();
        for (e, step) in epochs.iter().zip(&steps) {
            assert!(step.innovation.is_none());
            let m = propagate_belief(&cfg, &belief, e.t, 2).unwrap();
            assert!(max_abs_diff_v(step.state.mean(), m.mean()) < 1e-9);
            assert!(max_abs_diff_m(step.state.covariance(), m.covariance()) < 1e-9);
        }
    }

    #[test]
    fn fixed_center_matches_re_centering_on_linear_dynamics() {
        let model = oscillator(3);
        let meas = MeasurementModel::linear(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_element(1, 1, 0.04),
        )
        .unwrap();
        let prior = prior_state();
        let f = rot(0.4);
        let mut truth = DVector::from_vec(vec![0.8, -0.3]);
        let epochs: Vec<Epoch> = (1..=10)
            .map(|k| {
                truth = &f * &truth;
                Epoch {
                    t: 0.4 * k as f64,
                    y: Some(DVector::from_element(1, truth[0] + 0.03 * (k as f64).cos())),
                }
            })
            .collect();
        let cfg_re = KofConfig::new(&model, FrameMap::identity(2), 2, true).unwrap();
        let cfg_fix = KofConfig::new(&model, FrameMap::identity(2), 2, false).unwrap();
        let a = run_filter(&cfg_re, &meas, &prior, &epochs).unwrap();
        let b = run_filter(&cfg_fix, &meas, &prior, &epochs).unwrap();
        for (sa, sb) in a.iter().zip(&b) {
            assert!(max_abs_diff_v(sa.state.mean(), sb.state.mean()) < 1e-8);
            assert!(max_abs_diff_m(sa.state.covariance(), sb.state.covariance()) < 1e-8);
        }
    }

    #[test]
    fn innovations_stay_centered_over_a_long_run() {
        let model = oscillator(3);
        let cfg = KofConfig::new(&model, FrameMap::identity(2), 2, true).unwrap();
        let meas = MeasurementModel::linear(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_element(1, 1, 0.0025),
        )
        .unwrap();
        let prior = prior_state();
        let f = rot(0.4);
        let mut truth = DVector::from_vec(vec![0.8, -0.3]);
        let epochs: Vec<Epoch> = (1..=40)
            .map(|k| {
                truth = &f * &truth;
                // deterministic stand-in for white noise: an irrational
                // rotation of the circle has mean zero over the long run
                let noise = 0.05 * ((k as f64) * 2.399963 + 0.7).sin();
                Epoch {
                    t: 0.4 * k as f64,
                    y: Some(DVector::from_element(1, truth[0] + noise)),
                }
            })
            .collect();
        let steps = run_filter(&cfg, &meas, &prior, &epochs).unwrap();
        let nu: Vec<f64> = steps
            .iter()
            .filter_map(|s| s.innovation.as_ref().map(|v| v[0]))
            .collect();
        let n = nu.len() as f64;
        let mean = nu.iter().sum::<f64>() / n;
        let var = nu.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() <= 4.0 * var.sqrt() / n.sqrt(), "mean {mean}, sd {}", var.sqrt());
    }

    #[test]
    fn epoch_sequences_must_be_ordered() {
        let model = oscillator(2);
        let cfg = KofConfig::new(&model, FrameMap::identity(2), 2, true).unwrap();
        let meas = MeasurementModel::linear(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_element(1, 1, 0.01),
        )
        .unwrap();
        let prior = prior_state();
        let bad = vec![Epoch { t: 0.5, y: None }, Epoch { t: 0.4, y: None }];
        assert!(matches!(
            run_filter(&cfg, &meas, &prior, &bad),
            Err(KofError::EpochOrder)
        ));
        let before_prior = vec![Epoch { t: -0.1, y: None }];
        assert!(matches!(
            run_filter(&cfg, &meas, &prior, &before_prior),
            Err(KofError::EpochOrder)
        ));
        let wrong_len = vec![Epoch { t: 0.5, y: Some(DVector::zeros(3)) }];
        assert!(matches!(
            run_filter(&cfg, &meas, &prior, &wrong_len),
            Err(KofError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn frame_maps_must_round_trip() {
        let a_to = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let b_to = DVector::from_vec(vec![1.0, -2.0]);
        let a_from = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.25]);
        let b_from = DVector::from_vec(vec![-0.5, 0.5]);
        let frames = FrameMap::new(a_to, b_to, a_from, b_from).unwrap();
        let x = DVector::from_vec(vec![0.3, -0.8]);
        let back = frames.from_model(&frames.to_model(&x));
        assert!(max_abs_diff_v(&back, &x) < 1e-12);
        let p = DMatrix::from_row_slice(2, 2, &[0.04, 0.01, 0.01, 0.09]);
        let pw = frames.cov_to_model(&p);
        assert!((pw[(0, 0)] - 4.0 * 0.04).abs() < 1e-14);
        assert!((pw[(0, 1)] - 8.0 * 0.01).abs() < 1e-14);
        let p_back = frames.cov_from_model(&pw);
        assert!(max_abs_diff_m(&p_back, &p) < 1e-12);

        let wrong_inverse = FrameMap::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]),
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.3]),
            DVector::zeros(2),
        );
        assert!(matches!(wrong_inverse, Err(KofError::FrameInconsistent { .. })));
    }

    #[test]
    fn config_rejects_bad_shapes() {
        let model = oscillator(2);
        assert!(KofConfig::new(&model, FrameMap::identity(3), 2, true).is_err());
        assert!(KofConfig::new(&model, FrameMap::identity(2), 5, true).is_err());
        assert!(KofConfig::new(&model, FrameMap::identity(2), 1, true).is_err());
    }

    #[test]
    fn scaled_frame_reproduces_the_identity_result() {
        // the same oscillator expressed in a stretched, shifted model frame
        // must filter identically after mapping back
        let model = oscillator(3);
        let meas = MeasurementModel::linear(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_element(1, 1, 0.04),
        )
        .unwrap();
        let prior = prior_state();

        // w = 2x, so dw/dt = 2 f(x) = 2 f(w/2): same linear field scaled
        let comps = vec![
            Polynomial::variable(2, 1),
            Polynomial::variable(2, 0).scale(Complex64::new(-1.0, 0.0)),
        ];
        let dom = Domain::new(vec![-4.0, -4.0], vec![4.0, 4.0]).unwrap();
        let dom2 = Domain::new(vec![-4.0, -4.0], vec![4.0, 4.0]).unwrap();
        let field = VectorField::new(comps, dom).unwrap();
        let basis = BasisSet::new(2, 3, dom2).unwrap();
        let model_w = KoopmanModel::build(field, basis).unwrap();
        let frames = FrameMap::new(
            DMatrix::identity(2, 2) * 2.0,
            DVector::zeros(2),
            DMatrix::identity(2, 2) * 0.5,
            DVector::zeros(2),
        )
        .unwrap();

        let epochs: Vec<Epoch> = (1..=6)
            .map(|k| Epoch {
                t: 0.4 * k as f64,
                y: Some(DVector::from_element(1, 0.5 * (k as f64 * 1.7).cos())),
            })
            .collect();
        let cfg_x = KofConfig::new(&model, FrameMap::identity(2), 2, true).unwrap();
        let cfg_w = KofConfig::new(&model_w, frames, 2, true).unwrap();
        let a = run_filter(&cfg_x, &meas, &prior, &epochs).unwrap();
        let b = run_filter(&cfg_w, &meas, &prior, &epochs).unwrap();
        for (sa, sb) in a.iter().zip(&b) {
            assert!(max_abs_diff_v(sa.state.mean(), sb.state.mean()) < 1e-8);
            assert!(max_abs_diff_m(sa.state.covariance(), sb.state.covariance()) < 1e-8);
        }
    }
}

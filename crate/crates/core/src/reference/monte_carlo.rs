//! Seeded Monte Carlo comparison harness.
//!
//! Each run draws a truth state from the prior, integrates it through the
//! epoch schedule, synthesizes noisy observations, and runs the chosen
//! filter from the unperturbed prior. Runs use one counter-mode generator
//! with a per-run stream, and draws happen in a fixed order (initial state
//! first, then the noise of each observed epoch), so every method sees
//! identical truths and observations and a fixed seed reproduces the report
//! byte for byte regardless of thread scheduling.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::dynamics::DifferentiableDynamics;
use super::filters::{ekf_step, ikf_step, ukf_step, IkfConfig, UkfConfig};
use super::rk78::{rk78_integrate, IntegratorConfig};
use super::stats::{sample_stats, MCReport};
use super::ReferenceError;
use crate::kof::{run_filter, Epoch, FilterState, KofConfig, MeasurementModel};
use crate::moments::GaussianBelief;

/// Which filter the harness drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterMethod {
    Kof,
    Ekf,
    Ikf,
    Ukf,
}

impl FilterMethod {
    pub fn name(self) -> &'static str {
        match self {
            FilterMethod::Kof => "kof",
            FilterMethod::Ekf => "ekf",
            FilterMethod::Ikf => "ikf",
            FilterMethod::Ukf => "ukf",
        }
    }

    pub const ALL: [FilterMethod; 4] =
        [FilterMethod::Kof, FilterMethod::Ekf, FilterMethod::Ikf, FilterMethod::Ukf];
}

impl std::str::FromStr for FilterMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "kof" => Ok(FilterMethod::Kof),
            "ekf" => Ok(FilterMethod::Ekf),
            "ikf" => Ok(FilterMethod::Ikf),
            "ukf" => Ok(FilterMethod::Ukf),
            other => Err(format!("unknown filter method `{other}`")),
        }
    }
}

impl std::fmt::Display for FilterMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One epoch of the experiment schedule: an output time and whether an
/// observation is taken there.
#[derive(Debug, Clone, Copy)]
pub struct EpochSpec {
    pub t: f64,
    pub observed: bool,
}

/// Everything one filtering experiment needs, shared across runs and
/// methods.
pub struct FilterProblem<'a> {
    pub dynamics: &'a dyn DifferentiableDynamics,
    pub meas: &'a MeasurementModel,
    /// Initial belief; truths are drawn from it, filters start at its mean.
    pub prior: GaussianBelief,
    pub t0: f64,
    pub epochs: Vec<EpochSpec>,
    pub integrator: IntegratorConfig,
    /// Required for [`FilterMethod::Kof`], ignored otherwise.
    pub kof: Option<&'a KofConfig<'a>>,
    pub ukf: UkfConfig,
    pub ikf: IkfConfig,
}

/// Per-epoch record a single run contributes to the aggregate.
struct RunRecord {
    error: DVector<f64>,
    sigma: DVector<f64>,
    pos: f64,
    vel: f64,
}

pub fn monte_carlo(
    problem: &FilterProblem,
    method: FilterMethod,
    runs: usize,
    seed: u64,
) -> Result<MCReport, ReferenceError> {
    if runs < 2 {
        return Err(ReferenceError::TooFewRuns { runs });
    }
    let d = problem.dynamics.dim();
    if problem.prior.dim() != d {
        return Err(ReferenceError::DimensionMismatch { expected: d, got: problem.prior.dim() });
    }
    if problem.epochs.is_empty() {
        return Err(ReferenceError::BadEpochs);
    }
    let mut prev = problem.t0;
    for (i, e) in problem.epochs.iter().enumerate() {
        let ordered = if i == 0 { e.t >= prev } else { e.t > prev };
        if !e.t.is_finite() || !ordered {
            return Err(ReferenceError::BadEpochs);
        }
        prev = e.t;
    }
    if method == FilterMethod::Kof && problem.kof.is_none() {
        return Err(ReferenceError::MissingKofConfig);
    }

    let prior_chol = Cholesky::new(problem.prior.covariance().clone())
        .ok_or(ReferenceError::NotPsd { min_eig: f64::NAN })?;
    let noise_chol = Cholesky::new(problem.meas.r().clone())
        .ok_or(ReferenceError::SingularInnovation)?;
    let l_prior = prior_chol.l();
    let l_noise = noise_chol.l();
    let times: Vec<f64> = problem.epochs.iter().map(|e| e.t).collect();

    let outcomes: Vec<Result<Vec<RunRecord>, ReferenceError>> = (0..runs)
        .into_par_iter()
        .map(|run| single_run(problem, method, seed, run, &l_prior, &l_noise, &times))
        .collect();

    let mut records = Vec::with_capacity(runs);
    let mut failures = Vec::new();
    for (idx, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => records.push(r),
            Err(e) => failures.push((idx, e.to_string())),
        }
    }
    let n_ok = records.len();
    if n_ok < 2 {
        return Err(ReferenceError::TooFewRuns { runs: n_ok });
    }

    let n_epochs = times.len();
    let half = d / 2;
    let mut mean_error = Vec::with_capacity(n_epochs);
    let mut sigma_eff = Vec::with_capacity(n_epochs);
    let mut sigma_pred = Vec::with_capacity(n_epochs);
    let mut sigma_skew = Vec::with_capacity(n_epochs);
    let mut sigma_kurt = Vec::with_capacity(n_epochs);
    let mut sigma_pos_pred = Vec::with_capacity(n_epochs);
    let mut sigma_vel_pred = Vec::with_capacity(n_epochs);
    let mut sigma_pos_eff = Vec::with_capacity(n_epochs);
    let mut sigma_vel_eff = Vec::with_capacity(n_epochs);
    for k in 0..n_epochs {
        let errors: Vec<DVector<f64>> = records.iter().map(|r| r[k].error.clone()).collect();
        let stats = sample_stats(&errors)?;
        let mut pred = DVector::zeros(d);
        let mut pos = 0.0;
        let mut vel = 0.0;
        for r in &records {
            pred += &r[k].sigma;
            pos += r[k].pos;
            vel += r[k].vel;
        }
        pred /= n_ok as f64;
        sigma_pos_pred.push(pos / n_ok as f64);
        sigma_vel_pred.push(vel / n_ok as f64);
        sigma_pos_eff
            .push(stats.sigma.iter().take(half).map(|s| s * s).sum::<f64>().sqrt());
        sigma_vel_eff
            .push(stats.sigma.iter().skip(half).map(|s| s * s).sum::<f64>().sqrt());
        mean_error.push(stats.mean.iter().copied().collect());
        sigma_eff.push(stats.sigma.iter().copied().collect());
        sigma_skew.push(stats.sigma_skew.iter().copied().collect());
        sigma_kurt.push(stats.sigma_kurt.iter().copied().collect());
        sigma_pred.push(pred.iter().copied().collect());
    }

    Ok(MCReport {
        times,
        mean_error,
        sigma_eff,
        sigma_pred,
        sigma_skew,
        sigma_kurt,
        sigma_pos_pred,
        sigma_vel_pred,
        sigma_pos_eff,
        sigma_vel_eff,
        runs: n_ok,
        failures,
    })
}

fn single_run(
    problem: &FilterProblem,
    method: FilterMethod,
    seed: u64,
    run: usize,
    l_prior: &DMatrix<f64>,
    l_noise: &DMatrix<f64>,
    times: &[f64],
) -> Result<Vec<RunRecord>, ReferenceError> {
    let d = problem.dynamics.dim();
    let q = problem.meas.len();
    // Stream 0 is left unused so the run index alone determines the draws.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64 + 1);

    let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let truth0 = problem.prior.mean() + l_prior * z;
    let truth = rk78_integrate(problem.dynamics, &truth0, problem.t0, times, &problem.integrator)?;

    let observations: Vec<Option<DVector<f64>>> = problem
        .epochs
        .iter()
        .enumerate()
        .map(|(k, e)| {
            if !e.observed {
                return Ok(None);
            }
            let eta = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = problem.meas.map().eval(truth.states[k].as_slice())? + l_noise * eta;
            Ok(Some(y))
        })
        .collect::<Result<_, ReferenceError>>()?;

    let prior_state = FilterState::new(
        problem.t0,
        problem.prior.mean().clone(),
        problem.prior.covariance().clone(),
    )?;

    let estimates: Vec<FilterState> = match method {
        FilterMethod::Kof => {
            let cfg = problem.kof.ok_or(ReferenceError::MissingKofConfig)?;
            let epochs: Vec<Epoch> = times
                .iter()
                .zip(&observations)
                .map(|(&t, y)| Epoch { t, y: y.clone() })
                .collect();
            run_filter(cfg, problem.meas, &prior_state, &epochs)?
                .into_iter()
                .map(|step| step.state)
                .collect()
        }
        _ => {
            let mut state = prior_state;
            let mut out = Vec::with_capacity(times.len());
            for (k, &t) in times.iter().enumerate() {
                let dt = t - state.t();
                let y = observations[k].as_ref();
                state = match method {
                    FilterMethod::Ekf => {
                        ekf_step(problem.dynamics, problem.meas, &state, dt, y, &problem.integrator)?.0
                    }
                    FilterMethod::Ikf => ikf_step(
                        problem.dynamics,
                        problem.meas,
                        &state,
                        dt,
                        y,
                        &problem.integrator,
                        &problem.ikf,
                    )?
                    .0,
                    FilterMethod::Ukf => ukf_step(
                        problem.dynamics,
                        problem.meas,
                        &state,
                        dt,
                        y,
                        &problem.integrator,
                        &problem.ukf,
                    )?
                    .0,
                    FilterMethod::Kof => unreachable!("handled above"),
                };
                out.push(state.clone());
            }
            out
        }
    };

    let half = d / 2;
    Ok(estimates
        .iter()
        .zip(&truth.states)
        .map(|(est, truth_k)| {
            let sigma = est.covariance().diagonal().map(|v| v.max(0.0).sqrt());
            let pos = (0..half).map(|i| est.covariance()[(i, i)].max(0.0)).sum::<f64>().sqrt();
            let vel =
                (half..d).map(|i| est.covariance()[(i, i)].max(0.0)).sum::<f64>().sqrt();
            RunRecord { error: est.mean() - truth_k, sigma, pos, vel }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::koopman::{KoopmanModel, VectorField};
    use crate::poly::{BasisSet, Domain, Polynomial};
    use crate::reference::dynamics::LinearDynamics;
    use crate::reference::Dynamics;
    use nalgebra::DMatrix;
    use num_complex::Complex64;

    fn oscillator() -> LinearDynamics {
        LinearDynamics::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]))
    }

    fn position_meas(r: f64) -> MeasurementModel {
        MeasurementModel::linear(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_element(1, 1, r),
        )
        .unwrap()
    }

    fn prior() -> GaussianBelief {
        GaussianBelief::new(
            DVector::from_column_slice(&[0.6, -0.1]),
            DMatrix::from_diagonal(&DVector::from_column_slice(&[0.04, 0.09])),
        )
        .unwrap()
    }

    fn schedule(n: usize, dt: f64, observed: bool) -> Vec<EpochSpec> {
        (1..=n).map(|k| EpochSpec { t: k as f64 * dt, observed }).collect()
    }

    fn problem<'a>(
        dynamics: &'a dyn DifferentiableDynamics,
        meas: &'a MeasurementModel,
        epochs: Vec<EpochSpec>,
    ) -> FilterProblem<'a> {
        FilterProblem {
            dynamics,
            meas,
            prior: prior(),
            t0: 0.0,
            epochs,
            integrator: IntegratorConfig::default(),
            kof: None,
            ukf: UkfConfig::default(),
            ikf: IkfConfig::default(),
        }
    }

    #[test]
    fn a_fixed_seed_reproduces_the_report_exactly() {
        let dynamics = oscillator();
        let meas = position_meas(0.04);
        let p = problem(&dynamics, &meas, schedule(3, 0.4, true));
        let a = monte_carlo(&p, FilterMethod::Ekf, 4, 99).unwrap();
        let b = monte_carlo(&p, FilterMethod::Ekf, 4, 99).unwrap();
        assert_eq!(a, b);
        let c = monte_carlo(&p, FilterMethod::Ekf, 4, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn the_linear_filter_is_statistically_consistent() {
        let dynamics = oscillator();
        let meas = position_meas(0.04);
        let p = problem(&dynamics, &meas, schedule(8, 0.25, true));
        let runs = 200;
        let report = monte_carlo(&p, FilterMethod::Ekf, runs, 3).unwrap();
        assert_eq!(report.runs, runs);
        assert!(report.failures.is_empty());
        let last = report.times.len() - 1;
        let bound = 4.0 / (2.0 * runs as f64).sqrt();
        for i in 0..2 {
            let ratio = report.sigma_eff[last][i] / report.sigma_pred[last][i];
            assert!(
                (ratio - 1.0).abs() < bound,
                "axis {i}: sigma ratio {ratio} outside 1 +/- {bound}"
            );
            let mean_bound = 4.0 * report.sigma_eff[last][i] / (runs as f64).sqrt();
            assert!(
                report.mean_error[last][i].abs() < mean_bound,
                "axis {i}: mean error {} exceeds {mean_bound}",
                report.mean_error[last][i]
            );
        }
    }

    #[test]
    fn the_spectral_filter_runs_under_the_same_harness() {
        let dynamics = oscillator();
        let meas = position_meas(0.04);
        let domain = Domain::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let field = VectorField::new(
            vec![
                Polynomial::variable(2, 1),
                Polynomial::variable(2, 0).scale(Complex64::new(-1.0, 0.0)),
            ],
            domain.clone(),
        )
        .unwrap();
        let basis = BasisSet::new(2, 3, domain).unwrap();
        let model = KoopmanModel::build(field, basis).unwrap();
        let frames = crate::kof::FrameMap::identity(2);
        let cfg = KofConfig::new(&model, frames, 2, true).unwrap();
        let mut p = problem(&dynamics, &meas, schedule(3, 0.4, true));
        p.kof = Some(&cfg);
        let report = monte_carlo(&p, FilterMethod::Kof, 6, 5).unwrap();
        assert_eq!(report.runs, 6);
        assert!(report.failures.is_empty());
        // The spectral and linearized filters agree on a linear problem, so
        // their reports over identical draws should match tightly.
        let ekf = monte_carlo(&p, FilterMethod::Ekf, 6, 5).unwrap();
        for k in 0..report.times.len() {
            for i in 0..2 {
                assert!((report.sigma_eff[k][i] - ekf.sigma_eff[k][i]).abs() < 1e-7);
                assert!((report.mean_error[k][i] - ekf.mean_error[k][i]).abs() < 1e-7);
            }
        }
        let missing = monte_carlo(&problem(&dynamics, &meas, schedule(3, 0.4, true)),
            FilterMethod::Kof, 4, 5);
        assert!(matches!(missing, Err(ReferenceError::MissingKofConfig)));
    }

    /// Blows up in finite time for initial states above one, so a spread
    /// prior makes some runs fail and others succeed.
    struct Quadratic;

    impl Dynamics for Quadratic {
        fn dim(&self) -> usize {
            1
        }

        fn rhs(&self, _t: f64, state: &[f64]) -> Result<DVector<f64>, ReferenceError> {
            Ok(DVector::from_element(1, state[0] * state[0]))
        }
    }

    impl DifferentiableDynamics for Quadratic {
        fn jacobian(&self, _t: f64, state: &[f64]) -> Result<DMatrix<f64>, ReferenceError> {
            Ok(DMatrix::from_element(1, 1, 2.0 * state[0]))
        }
    }

    #[test]
    fn failed_runs_are_recorded_without_sinking_the_report() {
        let meas = MeasurementModel::linear(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 0.01),
        )
        .unwrap();
        let p = FilterProblem {
            dynamics: &Quadratic,
            meas: &meas,
            // The filter's own mean trajectory (from 0.5) stays finite past
            // t = 1, but truths drawn above 1.0 blow up before the epoch.
            prior: GaussianBelief::new(
                DVector::from_element(1, 0.5),
                DMatrix::from_element(1, 1, 0.25),
            )
            .unwrap(),
            t0: 0.0,
            epochs: vec![EpochSpec { t: 1.0, observed: false }],
            integrator: IntegratorConfig::default(),
            kof: None,
            ukf: UkfConfig::default(),
            ikf: IkfConfig::default(),
        };
        let runs = 12;
        let report = monte_carlo(&p, FilterMethod::Ekf, runs, 7).unwrap();
        assert!(report.runs >= 2);
        assert!(!report.failures.is_empty(), "expected at least one blowup");
        assert_eq!(report.runs + report.failures.len(), runs);
        for (_, msg) in &report.failures {
            assert!(msg.contains("stalled"), "unexpected failure: {msg}");
        }
    }

    #[test]
    fn degenerate_run_counts_are_rejected() {
        let dynamics = oscillator();
        let meas = position_meas(0.04);
        let p = problem(&dynamics, &meas, schedule(2, 0.4, true));
        assert!(matches!(
            monte_carlo(&p, FilterMethod::Ekf, 1, 0),
            Err(ReferenceError::TooFewRuns { runs: 1 })
        ));
    }
}

//! Runge–Kutta–Fehlberg 7(8) with adaptive step control.
//!
//! Thirteen stages per step; the embedded seventh-order solution supplies
//! the error estimate and the eighth-order solution is propagated. Output is
//! produced exactly at the requested epochs by clipping the step to land on
//! each epoch, so no interpolation error enters the reported states.

use nalgebra::DVector;

use super::dynamics::Dynamics;
use super::ReferenceError;

/// Stage times.
const C: [f64; 13] = [
    0.0,
    2.0 / 27.0,
    1.0 / 9.0,
    1.0 / 6.0,
    5.0 / 12.0,
    1.0 / 2.0,
    5.0 / 6.0,
    1.0 / 6.0,
    2.0 / 3.0,
    1.0 / 3.0,
    1.0,
    0.0,
    1.0,
];

/// Coupling coefficients; row `i` holds the weights of stages `0..i`.
const A: [&[f64]; 13] = [
    &[],
    &[2.0 / 27.0],
    &[1.0 / 36.0, 1.0 / 12.0],
    &[1.0 / 24.0, 0.0, 1.0 / 8.0],
    &[5.0 / 12.0, 0.0, -25.0 / 16.0, 25.0 / 16.0],
    &[1.0 / 20.0, 0.0, 0.0, 1.0 / 4.0, 1.0 / 5.0],
    &[-25.0 / 108.0, 0.0, 0.0, 125.0 / 108.0, -65.0 / 27.0, 125.0 / 54.0],
    &[31.0 / 300.0, 0.0, 0.0, 0.0, 61.0 / 225.0, -2.0 / 9.0, 13.0 / 900.0],
    &[2.0, 0.0, 0.0, -53.0 / 6.0, 704.0 / 45.0, -107.0 / 9.0, 67.0 / 90.0, 3.0],
    &[
        -91.0 / 108.0,
        0.0,
        0.0,
        23.0 / 108.0,
        -976.0 / 135.0,
        311.0 / 54.0,
        -19.0 / 60.0,
        17.0 / 6.0,
        -1.0 / 12.0,
    ],
    &[
        2383.0 / 4100.0,
        0.0,
        0.0,
        -341.0 / 164.0,
        4496.0 / 1025.0,
        -301.0 / 82.0,
        2133.0 / 4100.0,
        45.0 / 82.0,
        45.0 / 164.0,
        18.0 / 41.0,
    ],
    &[
        3.0 / 205.0,
        0.0,
        0.0,
        0.0,
        0.0,
        -6.0 / 41.0,
        -3.0 / 205.0,
        -3.0 / 41.0,
        3.0 / 41.0,
        6.0 / 41.0,
        0.0,
    ],
    &[
        -1777.0 / 4100.0,
        0.0,
        0.0,
        -341.0 / 164.0,
        4496.0 / 1025.0,
        -289.0 / 82.0,
        2193.0 / 4100.0,
        51.0 / 82.0,
        33.0 / 164.0,
        12.0 / 41.0,
        0.0,
        1.0,
    ],
];

/// Eighth-order solution weights.
const B8: [f64; 13] = [
    0.0,
    0.0,
    0.0,
    0.0,
    0.0,
    34.0 / 105.0,
    9.0 / 35.0,
    9.0 / 35.0,
    9.0 / 280.0,
    9.0 / 280.0,
    0.0,
    41.0 / 840.0,
    41.0 / 840.0,
];

/// The seventh- and eighth-order weights differ only on stages 0, 10, 11,
/// and 12, each by this factor, so the error estimate needs just those four.
const ERR_COEFF: f64 = 41.0 / 840.0;

/// Step-size growth is capped per step; shrink is floored so one rejection
/// cannot collapse the step.
const MAX_GROW: f64 = 4.0;
const MIN_SHRINK: f64 = 0.1;
const SAFETY: f64 = 0.9;
const MAX_REJECTIONS: u32 = 20;

#[derive(Debug, Clone, Copy)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-12, abs_tol: 1e-12, max_step: 0.25 }
    }
}

impl IntegratorConfig {
    fn validate(&self) -> Result<(), ReferenceError> {
        let ok = self.rel_tol > 0.0
            && self.abs_tol > 0.0
            && self.max_step > 0.0
            && self.rel_tol.is_finite()
            && self.abs_tol.is_finite()
            && self.max_step.is_finite();
        if ok {
            Ok(())
        } else {
            Err(ReferenceError::NonFinite)
        }
    }
}

/// States reported at the requested epochs, in order.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory holds at least one epoch")
    }
}

/// Integrates `dynamics` from `(t0, x0)` and reports the state at each of
/// `epochs`, which must be finite, strictly increasing, and start at or
/// after `t0`.
pub fn rk78_integrate<D: Dynamics + ?Sized>(
    dynamics: &D,
    x0: &DVector<f64>,
    t0: f64,
    epochs: &[f64],
    config: &IntegratorConfig,
) -> Result<Trajectory, ReferenceError> {
    config.validate()?;
    if x0.len() != dynamics.dim() {
        return Err(ReferenceError::DimensionMismatch {
            expected: dynamics.dim(),
            got: x0.len(),
        });
    }
    if !t0.is_finite() || x0.iter().any(|v| !v.is_finite()) {
        return Err(ReferenceError::NonFinite);
    }
    if epochs.is_empty() {
        return Err(ReferenceError::BadEpochs);
    }
    let mut prev = t0;
    for (i, &te) in epochs.iter().enumerate() {
        let ordered = if i == 0 { te >= prev } else { te > prev };
        if !te.is_finite() || !ordered {
            return Err(ReferenceError::BadEpochs);
        }
        prev = te;
    }

    let n = x0.len();
    let span = epochs[epochs.len() - 1] - t0;
    let mut t = t0;
    let mut y = x0.clone();
    let mut h = config.max_step.min((span / 100.0).max(1e-6));
    let mut ks: Vec<DVector<f64>> = vec![DVector::zeros(n); 13];
    let mut times = Vec::with_capacity(epochs.len());
    let mut states = Vec::with_capacity(epochs.len());

    for &te in epochs {
        while t < te {
            let mut rejections = 0u32;
            loop {
                let clipped = h >= te - t;
                let step = if clipped { te - t } else { h };
                if step < 1e-14 * t.abs().max(1.0) {
                    return Err(ReferenceError::Stiffness { t, step });
                }
                let stages_finite = attempt_step(dynamics, t, &y, step, &mut ks)?;
                let y8 = eighth_order_solution(&y, step, &ks);
                // A non-finite attempt is an automatic rejection; the norm
                // cannot be trusted to flag it because max() ignores NaN.
                let e = if stages_finite && y8.iter().all(|v| v.is_finite()) {
                    error_norm(&y, &y8, step, &ks, config)
                } else {
                    f64::INFINITY
                };
                if e <= 1.0 {
                    t = if clipped { te } else { t + step };
                    y = y8;
                    if !clipped {
                        let grow = (SAFETY * e.powf(-1.0 / 8.0)).min(MAX_GROW).max(MIN_SHRINK);
                        h = (step * grow).min(config.max_step);
                    }
                    break;
                }
                rejections += 1;
                if rejections > MAX_REJECTIONS {
                    return Err(ReferenceError::Stiffness { t, step });
                }
                let shrink = if e.is_finite() {
                    (SAFETY * e.powf(-1.0 / 8.0)).max(MIN_SHRINK)
                } else {
                    MIN_SHRINK
                };
                h = step * shrink.min(1.0);
            }
        }
        times.push(te);
        states.push(y.clone());
    }

    Ok(Trajectory { times, states })
}

/// Evaluates the thirteen stage derivatives at `(t, y)` with step `h`,
/// returning whether every stage came out finite.
fn attempt_step<D: Dynamics + ?Sized>(
    dynamics: &D,
    t: f64,
    y: &DVector<f64>,
    h: f64,
    ks: &mut [DVector<f64>],
) -> Result<bool, ReferenceError> {
    ks[0] = dynamics.rhs(t, y.as_slice())?;
    let mut finite = ks[0].iter().all(|v| v.is_finite());
    for i in 1..13 {
        let mut yi = y.clone();
        for (j, &a) in A[i].iter().enumerate() {
            if a != 0.0 {
                yi.axpy(h * a, &ks[j], 1.0);
            }
        }
        ks[i] = dynamics.rhs(t + C[i] * h, yi.as_slice())?;
        finite &= ks[i].iter().all(|v| v.is_finite());
    }
    Ok(finite)
}

fn eighth_order_solution(y: &DVector<f64>, h: f64, ks: &[DVector<f64>]) -> DVector<f64> {
    let mut y8 = y.clone();
    for (i, &b) in B8.iter().enumerate() {
        if b != 0.0 {
            y8.axpy(h * b, &ks[i], 1.0);
        }
    }
    y8
}

/// RMS of the embedded error over the componentwise tolerance scale.
fn error_norm(
    y: &DVector<f64>,
    y8: &DVector<f64>,
    h: f64,
    ks: &[DVector<f64>],
    config: &IntegratorConfig,
) -> f64 {
    let n = y.len();
    let mut sum = 0.0_f64;
    for i in 0..n {
        let err = h * ERR_COEFF * (ks[0][i] + ks[10][i] - ks[11][i] - ks[12][i]);
        let scale = config.abs_tol + config.rel_tol * y[i].abs().max(y8[i].abs());
        sum += (err / scale) * (err / scale);
    }
    (sum / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::dynamics::LinearDynamics;
    use nalgebra::{DMatrix, DVector};

    struct Quadratic;

    impl Dynamics for Quadratic {
        fn dim(&self) -> usize {
            1
        }

        fn rhs(&self, _t: f64, state: &[f64]) -> Result<DVector<f64>, ReferenceError> {
            Ok(DVector::from_element(1, state[0] * state[0]))
        }
    }

    fn oscillator() -> LinearDynamics {
        LinearDynamics::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]))
    }

    #[test]
    fn tableau_rows_sum_to_the_stage_times() {
        // Row 8 holds entries near 16 that cancel, so the float sum carries
        // a few ulps of roundoff; any transcription error would be far
        // larger than this bound.
        for i in 0..13 {
            let sum: f64 = A[i].iter().sum();
            assert!((sum - C[i]).abs() < 1e-13, "row {i}: {sum} vs {}", C[i]);
        }
    }

    #[test]
    fn weights_integrate_time_polynomials_through_degree_seven() {
        // An order-eight quadrature over the stage times must reproduce
        // integral of t^m on [0, 1] for m up to 7.
        for m in 0..8 {
            let sum: f64 = B8.iter().zip(C.iter()).map(|(&b, &c)| b * c.powi(m)).sum();
            let exact = 1.0 / (m as f64 + 1.0);
            assert!(
                (sum - exact).abs() < 1e-14,
                "moment {m}: {sum} vs {exact}"
            );
        }
    }

    #[test]
    fn exponential_decay_matches_the_analytic_solution() {
        let decay = LinearDynamics::new(DMatrix::from_element(1, 1, -1.0));
        let traj = rk78_integrate(
            &decay,
            &DVector::from_element(1, 1.0),
            0.0,
            &[1.0],
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert!((traj.last()[0] - (-1.0_f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn oscillator_energy_is_conserved_over_a_hundred_periods() {
        let t_end = 200.0 * std::f64::consts::PI;
        let traj = rk78_integrate(
            &oscillator(),
            &DVector::from_column_slice(&[1.0, 0.0]),
            0.0,
            &[t_end],
            &IntegratorConfig::default(),
        )
        .unwrap();
        let x = traj.last();
        let energy = 0.5 * (x[0] * x[0] + x[1] * x[1]);
        assert!((energy - 0.5).abs() < 1e-8, "energy drifted to {energy}");
    }

    #[test]
    fn fixed_step_error_shrinks_at_eighth_order() {
        // Huge tolerances make every step accept, so max_step fixes the
        // step size; halving it should cut the endpoint error by roughly
        // 2^8. The ratio bound leaves room for the error terms that do not
        // scale exactly.
        let t_end = 6.4;
        let endpoint = |h: f64| -> f64 {
            let cfg = IntegratorConfig { rel_tol: 1e6, abs_tol: 1e6, max_step: h };
            let traj = rk78_integrate(
                &oscillator(),
                &DVector::from_column_slice(&[1.0, 0.0]),
                0.0,
                &[t_end],
                &cfg,
            )
            .unwrap();
            let exact = DVector::from_column_slice(&[t_end.cos(), -t_end.sin()]);
            (traj.last() - exact).norm()
        };
        let coarse = endpoint(0.8);
        let fine = endpoint(0.4);
        assert!(fine > 1e-13, "fine error {fine} hit the roundoff floor");
        assert!(
            coarse / fine > 100.0,
            "order ratio {} too small (coarse {coarse}, fine {fine})",
            coarse / fine
        );
    }

    #[test]
    fn finite_time_blowup_reports_stiffness() {
        let err = rk78_integrate(
            &Quadratic,
            &DVector::from_element(1, 1.0),
            0.0,
            &[2.0],
            &IntegratorConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ReferenceError::Stiffness { .. }), "got {err:?}");
    }

    #[test]
    fn intermediate_epochs_do_not_change_the_endpoint() {
        let single = rk78_integrate(
            &oscillator(),
            &DVector::from_column_slice(&[1.0, 0.0]),
            0.0,
            &[1.0],
            &IntegratorConfig::default(),
        )
        .unwrap();
        let multi = rk78_integrate(
            &oscillator(),
            &DVector::from_column_slice(&[1.0, 0.0]),
            0.0,
            &[0.3, 0.7, 1.0],
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert_eq!(multi.times.len(), 3);
        assert!((single.last() - multi.last()).norm() < 1e-9);
    }

    #[test]
    fn epoch_at_the_start_time_reports_the_initial_state() {
        let traj = rk78_integrate(
            &oscillator(),
            &DVector::from_column_slice(&[1.0, 0.0]),
            0.0,
            &[0.0, 0.5],
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert_eq!(traj.states[0], DVector::from_column_slice(&[1.0, 0.0]));
    }

    #[test]
    fn misordered_epochs_are_rejected() {
        let y0 = DVector::from_column_slice(&[1.0, 0.0]);
        let cfg = IntegratorConfig::default();
        for epochs in [&[1.0, 0.5][..], &[-1.0][..], &[][..], &[0.5, 0.5][..]] {
            let err = rk78_integrate(&oscillator(), &y0, 0.0, epochs, &cfg).unwrap_err();
            assert!(matches!(err, ReferenceError::BadEpochs), "epochs {epochs:?}");
        }
    }
}

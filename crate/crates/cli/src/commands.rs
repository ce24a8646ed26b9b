//! The four subcommands. Each resolves its bench, runs the core pipeline,
//! and writes a versioned CSV (or the model artifact) plus a manifest into
//! the output directory.

use crate::bench::{load_bench, Bench};
use crate::output::{axis_columns, ensure_out_dir, fmt_row, write_csv, RunManifest};
use crate::{BuildArgs, CliError, CommonArgs, CompareArgs, FilterArgs, PropagateArgs};
use koopman_core::kof::{self, Epoch, FilterState, KofConfig, MeasurementModel};
use koopman_core::moments::GaussianBelief;
use koopman_core::reference::{
    ekf_step, ikf_step, monte_carlo, rk78_integrate, ukf_step, EpochSpec, FilterMethod,
    FilterProblem, IkfConfig, IntegratorConfig, UkfConfig,
};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use std::fs;
use std::path::Path;
use std::str::FromStr;

/// Numerical health of a freshly built model, written next to the artifact.
#[derive(Serialize)]
struct BuildDiagnostics {
    basis_len: usize,
    max_degree: u32,
    cond_c: f64,
    eigen_residual: f64,
    inverse_residual: f64,
    real_dynamics: bool,
    domain_lower: Vec<f64>,
    domain_upper: Vec<f64>,
}

pub fn cmd_build(args: &BuildArgs) -> Result<(), CliError> {
    let common = &args.common;
    let out = ensure_out_dir(common.out.as_deref())?;
    let bench = load_bench(&common.scenario, common.max_degree, common.order_n, None)?;

    let model_path = out.join("model.json");
    fs::write(&model_path, bench.model.to_json())
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", model_path.display())))?;

    let domain = bench.model.basis().domain();
    let dim = bench.model.basis().dim();
    let diag = BuildDiagnostics {
        basis_len: bench.model.len(),
        max_degree: common.max_degree,
        cond_c: bench.model.cond_c(),
        eigen_residual: bench.model.eigen_residual(),
        inverse_residual: bench.model.inverse_residual(),
        real_dynamics: bench.model.real_dynamics(),
        domain_lower: (0..dim).map(|i| domain.center(i) - domain.half_width(i)).collect(),
        domain_upper: (0..dim).map(|i| domain.center(i) + domain.half_width(i)).collect(),
    };
    let diag_path = out.join("build-diagnostics.json");
    let text = serde_json::to_string_pretty(&diag)
        .map_err(|e| CliError::Numeric(format!("cannot serialize diagnostics: {e}")))?;
    fs::write(&diag_path, text + "\n")
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", diag_path.display())))?;

    manifest("build", common, &out).write(&out)?;
    println!(
        "wrote {} ({} basis functions, cond(C) = {:.3e}, eigen residual {:.3e})",
        model_path.display(),
        bench.model.len(),
        bench.model.cond_c(),
        bench.model.eigen_residual(),
    );
    Ok(())
}

pub fn cmd_propagate(args: &PropagateArgs) -> Result<(), CliError> {
    let common = &args.common;
    check_psi(args.psi)?;
    let out = ensure_out_dir(common.out.as_deref())?;
    let bench = load_bench(&common.scenario, common.max_degree, common.order_n, args.model.as_deref())?;
    let cfg = KofConfig::new(&bench.model, bench.frames.clone(), args.psi, true)?;
    let d = bench.dim();

    let mut rows = Vec::with_capacity(bench.epochs.len() + 1);
    rows.push(fmt_row(0.0, gaussian_summary(&bench.prior, args.psi)));
    for (k, &t) in bench.epochs.iter().enumerate() {
        let moments = kof::propagate_belief(&cfg, &bench.prior, t, args.psi).map_err(|e| {
            CliError::Numeric(format!("propagation to epoch {} (t = {t}) failed: {e}", k + 1))
        })?;
        let mut values = Vec::with_capacity(4 * d);
        values.extend(moments.mean().iter().copied());
        values.extend((0..d).map(|i| moments.covariance()[(i, i)].max(0.0).sqrt()));
        values.extend((0..d).map(|i| match moments.skewness() {
            Some(s) => s.get(i, i, i).cbrt(),
            None => f64::NAN,
        }));
        values.extend((0..d).map(|i| match moments.kurtosis() {
            Some(kt) => kt.get(i, i, i, i).max(0.0).powf(0.25),
            None => f64::NAN,
        }));
        rows.push(fmt_row(t, values));
    }

    let columns = axis_columns(&["mean", "sigma", "sigma_skew", "sigma_kurt"], d);
    let path = write_csv(&out, "moments.csv", "propagate", &columns, &rows)?;
    manifest("propagate", common, &out)
        .param("psi", args.psi)
        .param_opt("model", args.model.as_deref())
        .write(&out)?;
    println!("wrote {} ({} epochs, psi = {})", path.display(), rows.len(), args.psi);
    Ok(())
}

pub fn cmd_filter(args: &FilterArgs) -> Result<(), CliError> {
    let common = &args.common;
    check_psi(args.psi)?;
    if args.simulate == args.obs.is_some() {
        return Err(CliError::Usage(
            "provide exactly one observation source: --obs FILE or --simulate".into(),
        ));
    }
    if !(args.noise_scale.is_finite() && args.noise_scale >= 0.0) {
        return Err(CliError::Usage("--noise-scale must be finite and nonnegative".into()));
    }
    let out = ensure_out_dir(common.out.as_deref())?;
    let bench = load_bench(&common.scenario, common.max_degree, common.order_n, args.model.as_deref())?;
    let meas = bench.measurement.as_ref().ok_or_else(|| {
        CliError::Usage(format!("scenario `{}` defines no measurement model", bench.name))
    })?;
    let cfg = KofConfig::new(&bench.model, bench.frames.clone(), args.psi, true)?;
    let d = bench.dim();
    let q = meas.len();

    let (epochs, observations) = match &args.obs {
        Some(path) => read_observations(path, q)?,
        None => {
            let (truth, ys) = simulate_run(&bench, meas, args.seed, args.noise_scale)?;
            let mut truth_rows = Vec::with_capacity(truth.len());
            truth_rows.push(fmt_row(0.0, truth[0].iter().copied()));
            for (&t, x) in bench.epochs.iter().zip(&truth[1..]) {
                truth_rows.push(fmt_row(t, x.iter().copied()));
            }
            write_csv(&out, "truth.csv", "truth", &plain_columns("x", d), &truth_rows)?;
            let meas_rows: Vec<String> = bench
                .epochs
                .iter()
                .zip(&ys)
                .map(|(&t, y)| fmt_row(t, y.iter().copied()))
                .collect();
            write_csv(&out, "measurements.csv", "measurements", &plain_columns("y", q), &meas_rows)?;
            (bench.epochs.clone(), ys)
        }
    };

    let mut state = FilterState::new(0.0, bench.prior.mean().clone(), bench.prior.covariance().clone())?;
    let mut rows = Vec::with_capacity(epochs.len());
    for (k, (&t, y)) in epochs.iter().zip(&observations).enumerate() {
        let epoch = k + 1;
        let dt = t - state.t();
        let pred = kof::predict(&cfg, &state, dt).map_err(|e| {
            CliError::Numeric(format!("prediction to epoch {epoch} (t = {t}) failed: {e}"))
        })?;
        let y_polys = kof::measurement_polynomial(&cfg, meas, &pred).map_err(|e| {
            CliError::Numeric(format!("measurement expansion at epoch {epoch} (t = {t}) failed: {e}"))
        })?;
        let (post, innovation) = kof::update(&pred, &y_polys, meas, y).map_err(|e| {
            CliError::Numeric(format!("update at epoch {epoch} (t = {t}) failed: {e}"))
        })?;
        let mut values = Vec::with_capacity(2 * d + q);
        values.extend(post.mean().iter().copied());
        values.extend((0..d).map(|i| post.covariance()[(i, i)]));
        values.extend(innovation.iter().copied());
        rows.push(fmt_row(t, values));
        state = post;
    }

    let mut columns = plain_columns("x", d);
    for i in 1..=d {
        columns.push_str(&format!(",P{i}{i}"));
    }
    for j in 1..=q {
        columns.push_str(&format!(",nu{j}"));
    }
    let path = write_csv(&out, "filter.csv", "filter", &columns, &rows)?;
    manifest("filter", common, &out)
        .param("psi", args.psi)
        .param("seed", args.seed)
        .param("simulate", args.simulate)
        .param("noise_scale", args.noise_scale)
        .param_opt("obs", args.obs.as_deref())
        .param_opt("model", args.model.as_deref())
        .write(&out)?;
    println!("wrote {} ({} updates)", path.display(), rows.len());
    Ok(())
}

pub fn cmd_compare(args: &CompareArgs) -> Result<(), CliError> {
    let common = &args.common;
    check_psi(args.psi)?;
    if args.runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    let methods = parse_methods(&args.methods)?;
    let out = ensure_out_dir(common.out.as_deref())?;
    let bench = load_bench(&common.scenario, common.max_degree, common.order_n, args.model.as_deref())?;
    let meas = bench.measurement.as_ref().ok_or_else(|| {
        CliError::Usage(format!("scenario `{}` defines no measurement model", bench.name))
    })?;
    let cfg = KofConfig::new(&bench.model, bench.frames.clone(), args.psi, true)?;
    let problem = FilterProblem {
        dynamics: &*bench.dynamics,
        meas,
        prior: bench.prior.clone(),
        t0: 0.0,
        epochs: bench.epochs.iter().map(|&t| EpochSpec { t, observed: true }).collect(),
        integrator: IntegratorConfig::default(),
        kof: Some(&cfg),
        ukf: UkfConfig::default(),
        ikf: IkfConfig::default(),
    };

    if args.runs == 1 {
        eprintln!("warning: sample spread is undefined for a single run; sigma_eff columns are NaN");
    }
    let mut rows = Vec::new();
    let mut succeeded = 0usize;
    for &method in &methods {
        let result = if args.runs == 1 {
            single_run_sigmas(&problem, method, args.seed)
        } else {
            monte_carlo(&problem, method, args.runs, args.seed)
                .map_err(CliError::from)
                .map(|report| {
                    if !report.failures.is_empty() {
                        eprintln!(
                            "warning: {} of {} runs failed for {method}; statistics use the rest",
                            report.failures.len(),
                            args.runs,
                        );
                    }
                    report
                        .times
                        .iter()
                        .enumerate()
                        .map(|(k, &t)| {
                            (
                                t,
                                [
                                    report.sigma_pos_pred[k],
                                    report.sigma_vel_pred[k],
                                    report.sigma_pos_eff[k],
                                    report.sigma_vel_eff[k],
                                ],
                            )
                        })
                        .collect()
                })
        };
        match result {
            Ok(per_epoch) => {
                succeeded += 1;
                for (t, sig) in per_epoch {
                    rows.push(format!(
                        "{t},{method},{},{},{},{}",
                        sig[0], sig[1], sig[2], sig[3],
                    ));
                }
            }
            Err(e) => eprintln!("warning: method {method} failed: {}", e.message()),
        }
    }
    if succeeded == 0 {
        return Err(CliError::Numeric("every requested method failed".into()));
    }

    let columns = "t,method,sigma_pos_pred,sigma_vel_pred,sigma_pos_eff,sigma_vel_eff";
    let path = write_csv(&out, "compare.csv", "compare", columns, &rows)?;
    manifest("compare", common, &out)
        .param("psi", args.psi)
        .param("runs", args.runs)
        .param("seed", args.seed)
        .param("methods", methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(","))
        .param_opt("model", args.model.as_deref())
        .write(&out)?;
    println!("wrote {} ({} methods, {} runs each)", path.display(), succeeded, args.runs);
    Ok(())
}

fn manifest(command: &str, common: &CommonArgs, out: &Path) -> RunManifest {
    let mut m = RunManifest::new(command, &common.scenario, out)
        .param("max_degree", common.max_degree);
    if let Some(order) = common.order_n {
        m = m.param("order_n", order);
    }
    m
}

impl RunManifest {
    fn param_opt(self, key: &str, value: Option<&Path>) -> Self {
        match value {
            Some(v) => self.param(key, v.display()),
            None => self,
        }
    }
}

fn check_psi(psi: u32) -> Result<(), CliError> {
    if (2..=4).contains(&psi) {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--psi must be 2, 3, or 4 (got {psi})")))
    }
}

fn parse_methods(arg: &str) -> Result<Vec<FilterMethod>, CliError> {
    let mut methods = Vec::new();
    for part in arg.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let method = FilterMethod::from_str(part).map_err(CliError::Usage)?;
        if !methods.contains(&method) {
            methods.push(method);
        }
    }
    if methods.is_empty() {
        return Err(CliError::Usage("--methods must name at least one method".into()));
    }
    Ok(methods)
}

/// Per-axis Gaussian summary of the prior for the t = 0 row: exact sigma,
/// zero skewness, and the fourth-root of the Gaussian fourth moment, with
/// the same NaN masking as later rows when `psi` does not track an order.
fn gaussian_summary(prior: &GaussianBelief, psi: u32) -> Vec<f64> {
    let d = prior.dim();
    let mut values = Vec::with_capacity(4 * d);
    values.extend(prior.mean().iter().copied());
    values.extend((0..d).map(|i| prior.covariance()[(i, i)].sqrt()));
    values.extend((0..d).map(|_| if psi >= 3 { 0.0 } else { f64::NAN }));
    values.extend((0..d).map(|i| {
        if psi >= 4 {
            (3.0 * prior.covariance()[(i, i)].powi(2)).powf(0.25)
        } else {
            f64::NAN
        }
    }));
    values
}

fn plain_columns(name: &str, n: usize) -> String {
    let mut header = String::from("t");
    for i in 1..=n {
        header.push_str(&format!(",{name}{i}"));
    }
    header
}

/// Draws one truth trajectory and its noisy observations with the same
/// generator layout as the Monte Carlo harness (stream `run + 1` of the
/// seed, here run 0), so a simulated filter run is reproducible against a
/// single-run comparison batch.
fn simulate_run(
    bench: &Bench,
    meas: &MeasurementModel,
    seed: u64,
    noise_scale: f64,
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>), CliError> {
    let d = bench.dim();
    let q = meas.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);

    let l_prior = psd_factor(bench.prior.covariance(), "prior covariance")?;
    let l_noise = psd_factor(meas.r(), "measurement noise covariance")?;
    let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let truth0 = bench.prior.mean() + &l_prior * z;

    let mut times = Vec::with_capacity(bench.epochs.len() + 1);
    times.push(0.0);
    times.extend(bench.epochs.iter().copied());
    let truth = rk78_integrate(&*bench.dynamics, &truth0, 0.0, &times, &IntegratorConfig::default())?;

    let observations = truth.states[1..]
        .iter()
        .map(|x| {
            let eta = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
            Ok(meas.map().eval(x.as_slice())? + &l_noise * eta * noise_scale)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok((truth.states, observations))
}

/// `--runs 1` fallback: one harness-identical run per method, reporting the
/// filter's own predicted sigmas and NaN for the (undefined) sample spread.
fn single_run_sigmas(
    problem: &FilterProblem,
    method: FilterMethod,
    seed: u64,
) -> Result<Vec<(f64, [f64; 4])>, CliError> {
    let d = problem.dynamics.dim();
    let q = problem.meas.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);

    let l_prior = psd_factor(problem.prior.covariance(), "prior covariance")?;
    let l_noise = psd_factor(problem.meas.r(), "measurement noise covariance")?;
    let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let truth0 = problem.prior.mean() + &l_prior * z;
    let times: Vec<f64> = problem.epochs.iter().map(|e| e.t).collect();
    let truth = rk78_integrate(problem.dynamics, &truth0, problem.t0, &times, &problem.integrator)?;
    let observations: Vec<Option<DVector<f64>>> = problem
        .epochs
        .iter()
        .enumerate()
        .map(|(k, e)| {
            if !e.observed {
                return Ok(None);
            }
            let eta = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
            Ok(Some(problem.meas.map().eval(truth.states[k].as_slice())? + &l_noise * eta))
        })
        .collect::<Result<_, CliError>>()?;

    let prior_state =
        FilterState::new(problem.t0, problem.prior.mean().clone(), problem.prior.covariance().clone())?;
    let estimates: Vec<FilterState> = match method {
        FilterMethod::Kof => {
            let cfg = problem
                .kof
                .ok_or_else(|| CliError::Usage("the kof method needs a spectral model".into()))?;
            let epochs: Vec<Epoch> = times
                .iter()
                .zip(&observations)
                .map(|(&t, y)| Epoch { t, y: y.clone() })
                .collect();
            kof::run_filter(cfg, problem.meas, &prior_state, &epochs)?
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
                    FilterMethod::Ikf => {
                        ikf_step(problem.dynamics, problem.meas, &state, dt, y, &problem.integrator, &problem.ikf)?.0
                    }
                    FilterMethod::Ukf => {
                        ukf_step(problem.dynamics, problem.meas, &state, dt, y, &problem.integrator, &problem.ukf)?.0
                    }
                    FilterMethod::Kof => unreachable!(),
                };
                out.push(state.clone());
            }
            out
        }
    };

    let half = d / 2;
    Ok(times
        .iter()
        .zip(&estimates)
        .map(|(&t, state)| {
            let p = state.covariance();
            let pos = (0..half).map(|i| p[(i, i)].max(0.0)).sum::<f64>().sqrt();
            let vel = (half..d).map(|i| p[(i, i)].max(0.0)).sum::<f64>().sqrt();
            (t, [pos, vel, f64::NAN, f64::NAN])
        })
        .collect())
}

fn psd_factor(cov: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>, CliError> {
    Cholesky::new(cov.clone())
        .map(|c| c.l())
        .ok_or_else(|| CliError::Numeric(format!("{what} is not positive definite")))
}

/// Parses an observation CSV (`t,y1..yq`); `#` comment lines and a header
/// line are skipped, epochs must be finite, strictly increasing, and after
/// the start time.
fn read_observations(path: &Path, q: usize) -> Result<(Vec<f64>, Vec<DVector<f64>>), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read observations {}: {e}", path.display())))?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if times.is_empty() && fields[0].parse::<f64>().is_err() {
            continue; // header line
        }
        let bad = |what: &str| {
            CliError::Usage(format!("observations {} line {}: {what}", path.display(), n + 1))
        };
        if fields.len() != q + 1 {
            return Err(bad(&format!("expected {} comma-separated fields, got {}", q + 1, fields.len())));
        }
        let mut parsed = Vec::with_capacity(q + 1);
        for field in &fields {
            parsed.push(field.parse::<f64>().map_err(|_| bad(&format!("`{field}` is not a number")))?);
        }
        let t = parsed[0];
        if !t.is_finite() || t <= *times.last().unwrap_or(&0.0) {
            return Err(bad("epochs must be finite, strictly increasing, and positive"));
        }
        times.push(t);
        values.push(DVector::from_column_slice(&parsed[1..]));
    }
    if times.is_empty() {
        return Err(CliError::Usage(format!(
            "observations {} contain no data rows",
            path.display()
        )));
    }
    Ok((times, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_lists_parse_with_order_and_deduplication() {
        let methods = parse_methods("ukf, kof,kof").unwrap();
        assert_eq!(methods, vec![FilterMethod::Ukf, FilterMethod::Kof]);
        assert!(parse_methods("kof,abc").is_err());
        assert!(parse_methods(" , ").is_err());
    }

    #[test]
    fn out_of_range_moment_orders_are_usage_errors() {
        assert!(check_psi(2).is_ok());
        assert!(check_psi(4).is_ok());
        assert!(matches!(check_psi(1), Err(CliError::Usage(_))));
        assert!(matches!(check_psi(5), Err(CliError::Usage(_))));
    }

    #[test]
    fn observation_files_are_validated_line_by_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.csv");
        fs::write(&path, "# comment\nt,y1,y2\n0.5,1.0,2.0\n1.0,3.0,4.0\n").unwrap();
        let (times, ys) = read_observations(&path, 2).unwrap();
        assert_eq!(times, vec![0.5, 1.0]);
        assert_eq!(ys[1], DVector::from_column_slice(&[3.0, 4.0]));

        fs::write(&path, "0.5,1.0,2.0\n0.4,3.0,4.0\n").unwrap();
        assert!(matches!(read_observations(&path, 2), Err(CliError::Usage(_))));
        fs::write(&path, "0.5,1.0\n").unwrap();
        assert!(matches!(read_observations(&path, 2), Err(CliError::Usage(_))));
        fs::write(&path, "t,y1,y2\n").unwrap();
        assert!(matches!(read_observations(&path, 2), Err(CliError::Usage(_))));
    }

    #[test]
    fn the_gaussian_start_row_matches_the_moment_conventions() {
        let prior = GaussianBelief::isotropic(DVector::from_column_slice(&[1.0, -0.5]), 0.1).unwrap();
        let full = gaussian_summary(&prior, 4);
        assert_eq!(full.len(), 8);
        assert_eq!(&full[0..2], &[1.0, -0.5]);
        assert!((full[2] - 0.1).abs() < 1e-15);
        assert_eq!(&full[4..6], &[0.0, 0.0]);
        // fourth root of the Gaussian fourth moment 3 sigma^4
        let expect = (3.0f64).powf(0.25) * 0.1;
        assert!((full[6] - expect).abs() < 1e-15);

        let masked = gaussian_summary(&prior, 2);
        assert!(masked[4].is_nan() && masked[6].is_nan());
    }
}

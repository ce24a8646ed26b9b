//! Scenario resolution: turns the `--scenario` argument into a ready-to-run
//! bench (model, frames, prior, epoch schedule, measurement, truth
//! dynamics), either by building the spectral model or by loading a
//! previously built artifact.

use crate::CliError;
use koopman_core::crtbp::{real_modal_form, CrtbpParams};
use koopman_core::kof::{FrameMap, MeasurementModel};
use koopman_core::koopman::{KoopmanModel, VectorField};
use koopman_core::moments::GaussianBelief;
use koopman_core::poly::{BasisSet, Domain};
use koopman_core::reference::{CrtbpDynamics, DifferentiableDynamics, LinearDynamics};
use koopman_core::scenario::{build_pipeline, BoxPolicy, Scenario};
use nalgebra::{DMatrix, DVector};
use std::fs;
use std::path::Path;

/// Name of the built-in two-state scenario (`dx_i/dt = -x_i` with a direct
/// full-state measurement) used for fast end-to-end checks.
pub const LINEAR_TEST: &str = "linear-test";

/// Everything a subcommand needs to run a scenario end to end.
pub struct Bench {
    pub name: String,
    pub model: KoopmanModel,
    pub frames: FrameMap,
    pub prior: GaussianBelief,
    pub epochs: Vec<f64>,
    pub measurement: Option<MeasurementModel>,
    pub dynamics: Box<dyn DifferentiableDynamics>,
}

impl Bench {
    pub fn dim(&self) -> usize {
        self.prior.dim()
    }
}

/// Resolves `--scenario`: the built-in linear bench, a preset name, or a
/// TOML/JSON scenario file. `order_n` overrides the scenario's gravity
/// expansion order; `model_path` loads a build artifact instead of
/// rebuilding the spectral model.
pub fn load_bench(
    scenario: &str,
    max_degree: u32,
    order_n: Option<u32>,
    model_path: Option<&Path>,
) -> Result<Bench, CliError> {
    if scenario == LINEAR_TEST {
        return linear_bench(max_degree, model_path);
    }
    let spec = resolve_scenario(scenario, order_n)?;
    crtbp_bench(spec, max_degree, model_path)
}

fn resolve_scenario(arg: &str, order_n: Option<u32>) -> Result<Scenario, CliError> {
    let mut spec = match Scenario::preset(arg) {
        Ok(s) => s,
        Err(_) => {
            let path = Path::new(arg);
            if !path.is_file() {
                return Err(CliError::Usage(format!(
                    "unknown scenario `{arg}`: not `{LINEAR_TEST}`, not a preset, and not a file"
                )));
            }
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read scenario {arg}: {e}")))?;
            let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
            if is_json { Scenario::from_json(&text)? } else { Scenario::from_toml(&text)? }
        }
    };
    if let Some(order) = order_n {
        spec.order = order;
        spec.validate()?;
    }
    Ok(spec)
}

fn linear_bench(max_degree: u32, model_path: Option<&Path>) -> Result<Bench, CliError> {
    let m = DMatrix::from_diagonal(&DVector::from_element(2, -1.0));
    let model = match model_path {
        Some(path) => load_model(path, 2)?,
        None => {
            let domain = Domain::new(vec![-2.0, -2.0], vec![2.0, 2.0])?;
            let field = VectorField::linear(&m, domain.clone())?;
            let basis = BasisSet::new(2, max_degree, domain)?;
            KoopmanModel::build(field, basis)?
        }
    };
    let sigma_meas = 1e-6;
    let measurement = MeasurementModel::linear(
        DMatrix::identity(2, 2),
        DMatrix::identity(2, 2) * sigma_meas * sigma_meas,
    )?;
    Ok(Bench {
        name: LINEAR_TEST.into(),
        model,
        frames: FrameMap::identity(2),
        prior: GaussianBelief::isotropic(DVector::from_column_slice(&[1.0, -0.5]), 0.1)?,
        epochs: (1..=8).map(|k| 0.25 * k as f64).collect(),
        measurement: Some(measurement),
        dynamics: Box::new(LinearDynamics::new(m)),
    })
}

fn crtbp_bench(
    spec: Scenario,
    max_degree: u32,
    model_path: Option<&Path>,
) -> Result<Bench, CliError> {
    let dynamics: Box<dyn DifferentiableDynamics> = Box::new(CrtbpDynamics::new(spec.mu));
    match model_path {
        None => {
            let pipeline = build_pipeline(&spec, max_degree, &BoxPolicy::default())?;
            Ok(Bench {
                name: pipeline.scenario.name,
                model: pipeline.model,
                frames: pipeline.frames,
                prior: pipeline.prior,
                epochs: pipeline.epochs,
                measurement: pipeline.measurement,
                dynamics,
            })
        }
        Some(path) => {
            let model = load_model(path, 6)?;
            let params = CrtbpParams::with_order(spec.mu, spec.point, spec.order)
                .map_err(|e| CliError::Usage(format!("invalid scenario geometry: {e}")))?;
            let modal = real_modal_form(&params)?;
            let frames = FrameMap::new(
                modal.to_modal().matrix().map(|v| v.re),
                modal.to_modal().offset().map(|v| v.re),
                modal.from_modal().matrix().map(|v| v.re),
                modal.from_modal().offset().map(|v| v.re),
            )?;
            let prior = GaussianBelief::isotropic(
                DVector::from_column_slice(&spec.initial_mean),
                spec.initial_sigma,
            )?;
            let epochs = spec.epoch_times();
            let measurement = spec.measurement()?;
            Ok(Bench { name: spec.name, model, frames, prior, epochs, measurement, dynamics })
        }
    }
}

fn load_model(path: &Path, dim: usize) -> Result<KoopmanModel, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read model {}: {e}", path.display())))?;
    let model = KoopmanModel::from_json(&text)
        .map_err(|e| CliError::Usage(format!("invalid model artifact {}: {e}", path.display())))?;
    if model.basis().dim() != dim {
        return Err(CliError::Usage(format!(
            "model artifact is {}-dimensional but the scenario needs {dim} states",
            model.basis().dim()
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn the_linear_bench_is_exact_for_its_own_dynamics() {
        let bench = load_bench(LINEAR_TEST, 3, None, None).unwrap();
        assert_eq!(bench.dim(), 2);
        assert_eq!(bench.epochs.len(), 8);
        assert!(bench.model.real_dynamics());
        // a degree-3 basis represents linear dynamics without truncation
        assert!(bench.model.eigen_residual() < 1e-10);
        assert!(bench.measurement.is_some());
    }

    #[test]
    fn unknown_scenarios_are_usage_errors() {
        let err = match load_bench("no-such-orbit", 3, None, None) {
            Ok(_) => panic!("an unknown scenario must not resolve"),
            Err(e) => e,
        };
        assert!(matches!(err, CliError::Usage(_)), "got {err:?}");
    }

    #[test]
    fn scenario_files_round_trip_through_the_loader() {
        let spec = Scenario::preset("earth-moon-L1-halo").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("orbit.toml");
        fs::write(&path, toml::to_string(&spec).unwrap()).unwrap();
        let loaded = resolve_scenario(path.to_str().unwrap(), Some(3)).unwrap();
        assert_eq!(loaded.mu, spec.mu);
        assert_eq!(loaded.order, 3);
    }

    #[test]
    fn order_overrides_below_the_minimum_are_rejected() {
        let err = resolve_scenario("earth-moon-L1-halo", Some(1)).unwrap_err();
        assert!(matches!(err, CliError::Usage(_)), "got {err:?}");
    }
}

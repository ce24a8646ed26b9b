//! Experiment configurations and the pipeline that turns one into a ready
//! spectral-filter bench.
//!
//! A [`Scenario`] is a small serializable record: which three-body system,
//! which libration point, the gravity expansion order, the initial belief,
//! and the observation schedule. [`build_pipeline`] does the heavy lifting
//! once per scenario: it derives the real modal model, sizes an expansion
//! box around the nominal orbit, builds the Koopman model on that box, and
//! packages the frame maps, prior, epochs, and measurement model the
//! filters and the CLI consume.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::crtbp::{real_modal_form, CrtbpError, CrtbpParams, LibrationPoint, RealModalModel};
use crate::kof::{FrameMap, KofError, MeasurementModel, ARCSEC};
use crate::koopman::{KoopmanError, KoopmanModel, VectorField};
use crate::moments::{GaussianBelief, MomentError};
use crate::poly::{BasisSet, Domain, PolyError};
use crate::reference::{rk78_integrate, CrtbpDynamics, IntegratorConfig, ReferenceError};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown scenario preset `{name}`; available: earth-moon-L1-halo, sun-earth-L1-lyapunov")]
    UnknownPreset { name: String },
    #[error("scenario file is not valid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("scenario file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Crtbp(#[from] CrtbpError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Koopman(#[from] KoopmanError),
    #[error(transparent)]
    Kof(#[from] KofError),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
}

/// A named experiment configuration. Serializable as TOML or JSON; the two
/// shipped presets cover a three-dimensional halo orbit near the
/// Earth–Moon L1 point and a planar Lyapunov orbit near the Sun–Earth L1
/// point.
///
/// Times are in the nondimensional rotating-frame unit of the system, and
/// the state is barycentric `(x, y, z, vx, vy, vz)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Mass ratio of the secondary.
    pub mu: f64,
    pub point: LibrationPoint,
    /// Highest solid Legendre degree kept in the expanded gravity.
    pub order: u32,
    pub initial_mean: [f64; 6],
    /// Isotropic initial standard deviation per axis.
    pub initial_sigma: f64,
    pub t_final: f64,
    /// Epoch spacing; epochs are `cadence, 2·cadence, …` through `t_final`.
    pub cadence: f64,
    /// Angle-pair observation noise in arcseconds; `None` means the
    /// scenario is propagation-only.
    pub meas_sigma_arcsec: Option<f64>,
}

pub const PRESET_NAMES: [&str; 2] = ["earth-moon-L1-halo", "sun-earth-L1-lyapunov"];

impl Scenario {
    /// Looks up a shipped preset by name.
    pub fn preset(name: &str) -> Result<Scenario, ScenarioError> {
        match name {
            "earth-moon-L1-halo" => Ok(Scenario {
                name: name.to_string(),
                mu: 0.012153281419431,
                point: LibrationPoint::L1,
                order: 4,
                initial_mean: [
                    0.823376807050253,
                    0.0,
                    0.001386166961157,
                    0.0,
                    0.126366690232230,
                    0.0,
                ],
                initial_sigma: 1e-4,
                t_final: 2.0,
                cadence: 0.2,
                meas_sigma_arcsec: None,
            }),
            "sun-earth-L1-lyapunov" => Ok(Scenario {
                name: name.to_string(),
                mu: 3.003410642560030e-06,
                point: LibrationPoint::L1,
                order: 4,
                initial_mean: [0.989826595322, 0.0, 0.0, 0.0, 0.00137295958289, 0.0],
                initial_sigma: 1e-4,
                t_final: 6.0,
                cadence: 0.4,
                meas_sigma_arcsec: Some(10.0),
            }),
            other => Err(ScenarioError::UnknownPreset { name: other.to_string() }),
        }
    }

    pub fn from_toml(text: &str) -> Result<Scenario, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |msg: &str| Err(ScenarioError::Invalid(msg.to_string()));
        if !(self.mu > 0.0 && self.mu < 0.5) {
            return bad("mass ratio must lie in (0, 1/2)");
        }
        if self.order < 2 {
            return bad("expansion order must be at least 2");
        }
        if !self.initial_mean.iter().all(|v| v.is_finite()) {
            return bad("initial mean must be finite");
        }
        if !(self.initial_sigma > 0.0 && self.initial_sigma.is_finite()) {
            return bad("initial sigma must be positive");
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad("final time must be positive");
        }
        if !(self.cadence > 0.0 && self.cadence <= self.t_final) {
            return bad("cadence must be positive and no longer than the final time");
        }
        if let Some(s) = self.meas_sigma_arcsec {
            if !(s > 0.0 && s.is_finite()) {
                return bad("measurement sigma must be positive");
            }
        }
        Ok(())
    }

    /// Output epochs `cadence, 2·cadence, …` through `t_final` (the last
    /// epoch may carry float dust past `t_final` when the cadence does not
    /// divide it exactly in binary).
    pub fn epoch_times(&self) -> Vec<f64> {
        let n = (self.t_final / self.cadence + 1e-9).floor() as usize;
        (1..=n).map(|k| k as f64 * self.cadence).collect()
    }

    /// The observation model this scenario implies: angle pairs seen from
    /// the secondary's primary-side neighborhood — the observer sits at
    /// `(1 - mu, 0, 0)`, the secondary's barycentric position.
    pub fn measurement(&self) -> Result<Option<MeasurementModel>, ScenarioError> {
        let Some(arcsec) = self.meas_sigma_arcsec else { return Ok(None) };
        let meas = MeasurementModel::az_el(1.0 - self.mu, arcsec * ARCSEC, 2)?;
        Ok(Some(meas))
    }
}

/// How the expansion box is sized around the nominal orbit, per modal axis.
#[derive(Debug, Clone, Copy)]
pub struct BoxPolicy {
    /// Fractional padding of the orbit's modal excursion.
    pub rel_margin: f64,
    /// Additional padding in units of the mapped initial sigma.
    pub sigma_margin: f64,
    /// Sample count along the nominal orbit.
    pub samples: usize,
}

impl Default for BoxPolicy {
    fn default() -> Self {
        Self { rel_margin: 0.25, sigma_margin: 10.0, samples: 200 }
    }
}

/// Everything derived from a scenario that the filters and CLI need: the
/// modal model, the Koopman model on its expansion box, the physical/modal
/// frame maps, the initial belief, the epoch schedule, and the measurement
/// model when the scenario defines one.
pub struct ScenarioPipeline {
    pub scenario: Scenario,
    pub modal: RealModalModel,
    pub model: KoopmanModel,
    pub frames: FrameMap,
    pub prior: GaussianBelief,
    pub epochs: Vec<f64>,
    pub measurement: Option<MeasurementModel>,
}

/// Builds the full pipeline for a scenario: solve the libration geometry,
/// integrate the nominal orbit, size the modal expansion box, and project
/// the modal equations of motion onto the basis of total degree
/// `max_degree`.
pub fn build_pipeline(
    scenario: &Scenario,
    max_degree: u32,
    policy: &BoxPolicy,
) -> Result<ScenarioPipeline, ScenarioError> {
    scenario.validate()?;
    if policy.samples < 2 || !(policy.rel_margin >= 0.0) || !(policy.sigma_margin >= 0.0) {
        return Err(ScenarioError::Invalid("box policy must have >= 2 samples and nonnegative margins".into()));
    }
    let params = CrtbpParams::with_order(scenario.mu, scenario.point, scenario.order)?;
    let modal = real_modal_form(&params)?;

    // Nominal orbit, sampled densely enough to see the full modal excursion.
    let dynamics = CrtbpDynamics::new(scenario.mu);
    let times: Vec<f64> = (0..policy.samples)
        .map(|k| k as f64 * scenario.t_final / (policy.samples - 1) as f64)
        .collect();
    let mean = DVector::from_column_slice(&scenario.initial_mean);
    let nominal = rk78_integrate(&dynamics, &mean, 0.0, &times, &IntegratorConfig::default())?;

    let a_to = modal.to_modal().matrix().map(|v| v.re);
    let b_to = modal.to_modal().offset().map(|v| v.re);
    let a_from = modal.from_modal().matrix().map(|v| v.re);
    let b_from = modal.from_modal().offset().map(|v| v.re);

    // Per-axis modal excursion of the orbit, padded relatively and by the
    // mapped initial uncertainty, so the basis stays accurate over every
    // state the filter will evaluate.
    let mut lo = DVector::from_element(6, f64::INFINITY);
    let mut hi = DVector::from_element(6, f64::NEG_INFINITY);
    for state in &nominal.states {
        let w = &a_to * state + &b_to;
        for i in 0..6 {
            lo[i] = lo[i].min(w[i]);
            hi[i] = hi[i].max(w[i]);
        }
    }
    let sigma_modal: DVector<f64> =
        DVector::from_fn(6, |i, _| scenario.initial_sigma * a_to.row(i).norm());
    let mut lower = Vec::with_capacity(6);
    let mut upper = Vec::with_capacity(6);
    for i in 0..6 {
        let pad = policy.rel_margin * (hi[i] - lo[i]) + policy.sigma_margin * sigma_modal[i];
        lower.push(lo[i] - pad);
        upper.push(hi[i] + pad);
    }
    let domain = Domain::new(lower, upper)?;

    let field = VectorField::new(modal.eom().components().to_vec(), domain.clone())?;
    let basis = BasisSet::new(6, max_degree, domain)?;
    let model = KoopmanModel::build(field, basis)?;

    let frames = FrameMap::new(a_to, b_to, a_from, b_from)?;
    let prior = GaussianBelief::isotropic(mean, scenario.initial_sigma)?;
    let epochs = scenario.epoch_times();
    let measurement = scenario.measurement()?;

    Ok(ScenarioPipeline { scenario: scenario.clone(), modal, model, frames, prior, epochs, measurement })
}

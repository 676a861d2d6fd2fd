//! One Monte-Carlo trial: scenario → channel → pilots → estimation →
//! localization → beamforming.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{angle_error, nmse_db};
use crate::beamformer::{evaluate_scheme, truth_points, BeamformingOutcome, BeamformingScheme};
use crate::channel::{build_channel, ChannelTensor};
use crate::dictionary::{DictionaryVariant, PolarDictionary};
use crate::error::{Error, Result};
use crate::estimator::{amp_em_estimate, omp_estimate, reconstruct_spatial, sensing_matrices, AmpOptions, SparseChannelEstimate};
use crate::locator::{locate, LocationReport};
use crate::numerics::mix_seed;
use crate::pilot::{build_pilot_frame, simulate_uplink, MeasurementSet, PilotFrame};
use crate::scenario::{sample_scenario, PolarLink, ScenarioGeometry, SystemConfig};

/// Channel estimators compared in the NMSE experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorScheme {
    AmpPolarFd,
    OmpPolarFd,
    OmpPolarFlat,
    OmpDft,
}

impl EstimatorScheme {
    pub const ALL: [EstimatorScheme; 4] = [
        EstimatorScheme::AmpPolarFd,
        EstimatorScheme::OmpPolarFd,
        EstimatorScheme::OmpPolarFlat,
        EstimatorScheme::OmpDft,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorScheme::AmpPolarFd => "amp-polar-fd",
            EstimatorScheme::OmpPolarFd => "omp-polar-fd",
            EstimatorScheme::OmpPolarFlat => "omp-polar-flat",
            EstimatorScheme::OmpDft => "omp-dft",
        }
    }

    pub fn variant(self) -> DictionaryVariant {
        match self {
            EstimatorScheme::AmpPolarFd | EstimatorScheme::OmpPolarFd => DictionaryVariant::FrequencyDependent,
            EstimatorScheme::OmpPolarFlat => DictionaryVariant::FrequencyFlat,
            EstimatorScheme::OmpDft => DictionaryVariant::Dft,
        }
    }
}

impl fmt::Display for EstimatorScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator scheme '{s}'")))
    }
}

/// Localization stage whose UT estimate is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocationStage {
    LosOnly,
    Coarse,
    Refined,
}

impl LocationStage {
    pub const ALL: [LocationStage; 3] = [LocationStage::LosOnly, LocationStage::Coarse, LocationStage::Refined];

    pub fn name(self) -> &'static str {
        match self {
            LocationStage::LosOnly => "los-only",
            LocationStage::Coarse => "coarse",
            LocationStage::Refined => "refined",
        }
    }

    pub fn pick(self, report: &LocationReport) -> Option<[f64; 2]> {
        match self {
            LocationStage::LosOnly => report.los_only_ut,
            LocationStage::Coarse => Some(report.coarse_ut),
            LocationStage::Refined => Some(report.refined_ut),
        }
    }
}

/// Dictionaries shared by every trial with the same configuration.
pub struct TrialContext {
    pub config: SystemConfig,
    pub estimators: Vec<EstimatorScheme>,
    pub beamformers: Vec<BeamformingScheme>,
    dictionaries: Vec<(DictionaryVariant, PolarDictionary)>,
}

impl TrialContext {
    pub fn new(config: SystemConfig, estimators: &[EstimatorScheme], beamformers: &[BeamformingScheme]) -> Result<Self> {
        config.validate()?;
        let mut estimators = estimators.to_vec();
        estimators.sort();
        estimators.dedup();
        let mut beamformers = beamformers.to_vec();
        beamformers.sort();
        beamformers.dedup();
        if !beamformers.is_empty() && locator_source(&estimators).is_none() {
            return Err(Error::Config(
                "beamforming needs a polar-lattice estimator to locate from".into(),
            ));
        }
        let mut dictionaries: Vec<(DictionaryVariant, PolarDictionary)> = Vec::new();
        for e in &estimators {
            let v = e.variant();
            if !dictionaries.iter().any(|(d, _)| *d == v) {
                dictionaries.push((v, PolarDictionary::new(&config, v)));
            }
        }
        Ok(Self {
            config,
            estimators,
            beamformers,
            dictionaries,
        })
    }

    pub fn dictionary(&self, variant: DictionaryVariant) -> &PolarDictionary {
        &self
            .dictionaries
            .iter()
            .find(|(v, _)| *v == variant)
            .expect("dictionary built for every requested estimator")
            .1
    }
}

/// Estimator whose output drives localization: AMP first, then polar OMP.
pub fn locator_source(estimators: &[EstimatorScheme]) -> Option<EstimatorScheme> {
    [EstimatorScheme::AmpPolarFd, EstimatorScheme::OmpPolarFd, EstimatorScheme::OmpPolarFlat]
        .into_iter()
        .find(|e| estimators.contains(e))
}

/// A stage error inside a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub kind: String,
    pub message: String,
}

impl StageFailure {
    fn new(stage: impl Into<String>, err: &Error) -> Self {
        Self {
            stage: stage.into(),
            kind: err.kind().into(),
            message: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOutcome {
    pub scheme: EstimatorScheme,
    pub nmse_db: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Errors of one localization stage's UT estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationError {
    pub stage: LocationStage,
    pub theta_error: f64,
    pub r_error: f64,
}

/// Everything a trial produced, including intermediates for dumps.
pub struct TrialArtifacts {
    pub seed: u64,
    pub scenario: ScenarioGeometry,
    pub uplink: ChannelTensor,
    pub frame: PilotFrame,
    pub measurements: MeasurementSet,
    pub estimates: Vec<(EstimatorScheme, SparseChannelEstimate)>,
    pub report: Option<LocationReport>,
    pub summary: TrialSummary,
}

/// Serializable per-trial results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub seed: u64,
    pub num_paths: usize,
    pub estimates: Vec<EstimateOutcome>,
    pub locator: Option<EstimatorScheme>,
    pub num_mpc: Option<usize>,
    pub location: Vec<LocationError>,
    pub beamforming: Vec<BeamformingOutcome>,
    pub failures: Vec<StageFailure>,
}

/// Derived per-stage seeds so that stages draw independent streams.
pub fn stage_seed(seed: u64, stage: u64) -> u64 {
    mix_seed(seed, &[stage])
}

/// Runs the full pipeline once. Errors before estimation abort the trial;
/// later stage errors are recorded in the summary.
pub fn run_trial(ctx: &TrialContext, seed: u64) -> Result<TrialArtifacts> {
    let cfg = &ctx.config;
    let scenario = sample_scenario(cfg, stage_seed(seed, 0))?;
    let uplink = build_channel(&scenario, cfg)?;
    let frame = build_pilot_frame(cfg, stage_seed(seed, 1));
    let measurements = simulate_uplink(&uplink, &frame, cfg, stage_seed(seed, 2))?;
    let mut summary = TrialSummary {
        seed,
        num_paths: scenario.num_paths(),
        estimates: Vec::new(),
        locator: None,
        num_mpc: None,
        location: Vec::new(),
        beamforming: Vec::new(),
        failures: Vec::new(),
    };

    let mut estimates = Vec::new();
    for &scheme in &ctx.estimators {
        let dict = ctx.dictionary(scheme.variant());
        let sensing = sensing_matrices(&frame, dict);
        let result = match scheme {
            EstimatorScheme::AmpPolarFd => amp_em_estimate(&measurements, &sensing, &AmpOptions::from_config(cfg)),
            _ => omp_estimate(&measurements, &sensing, scenario.num_paths().min(cfg.n_meas())),
        };
        let scored = result.and_then(|est| {
            let nmse = nmse_db(&uplink, &reconstruct_spatial(&est, dict)?)?;
            Ok((est, nmse))
        });
        match scored {
            Ok((est, nmse)) => {
                summary.estimates.push(EstimateOutcome {
                    scheme,
                    nmse_db: nmse,
                    iterations: est.iterations,
                    converged: est.converged,
                });
                estimates.push((scheme, est));
            }
            Err(e) => summary.failures.push(StageFailure::new(format!("estimate:{scheme}"), &e)),
        }
    }

    let source = locator_source(&ctx.estimators);
    summary.locator = source;
    let report = source.and_then(|scheme| {
        let est = &estimates.iter().find(|(s, _)| *s == scheme)?.1;
        let dict = ctx.dictionary(scheme.variant());
        match locate(&measurements, est, &dict.lattice, cfg, stage_seed(seed, 3)) {
            Ok(r) => Some(r),
            Err(e) => {
                summary.failures.push(StageFailure::new("locate", &e));
                None
            }
        }
    });

    if let Some(report) = &report {
        summary.num_mpc = Some(report.num_mpc);
        let truth = scenario.ut_polar();
        for stage in LocationStage::ALL {
            if let Some(p) = stage.pick(report) {
                let est = PolarLink::from_cartesian(p[0], p[1]);
                summary.location.push(LocationError {
                    stage,
                    theta_error: angle_error(est.theta, truth.theta),
                    r_error: est.r - truth.r,
                });
            }
        }
        if !ctx.beamformers.is_empty() {
            let downlink = uplink.reciprocal();
            let points = truth_points(&scenario);
            for &scheme in &ctx.beamformers {
                match evaluate_scheme(scheme, &downlink, report, Some(&points), cfg) {
                    Ok(o) => summary.beamforming.push(o),
                    Err(e) => summary.failures.push(StageFailure::new(format!("beamform:{scheme}"), &e)),
                }
            }
        }
    }

    Ok(TrialArtifacts {
        seed,
        scenario,
        uplink,
        frame,
        measurements,
        estimates,
        report,
        summary,
    })
}

//! Monte-Carlo experiments: sweeps, per-trial lineage, aggregate metrics and
//! file outputs.

mod config;
mod metrics;
mod trial;

pub use config::{config_with_overrides, load_config, merge, parse_document, read_document};
pub use metrics::{angle_error, median, nmse_db, rmse, rmse_db, RmseSummary, DB_FLOOR};
pub use trial::{
    locator_source, run_trial, stage_seed, EstimateOutcome, EstimatorScheme, LocationError, LocationStage,
    StageFailure, TrialArtifacts, TrialContext, TrialSummary,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::beamformer::BeamformingScheme;
use crate::error::{Error, Result};
use crate::numerics::mix_seed;
use crate::scenario::{Profile, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVariable {
    /// Pilot measurement length `P`; must be a multiple of `n_rf_bs`.
    MeasurementLength,
    /// Every scatterer is drawn at exactly this BS distance.
    ScattererDistance,
    UplinkSnr,
    NBs,
    /// Downlink transmit power, dBm.
    TransmitPower,
    Bandwidth,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::MeasurementLength => "measurement-length",
            SweepVariable::ScattererDistance => "scatterer-distance",
            SweepVariable::UplinkSnr => "uplink-snr",
            SweepVariable::NBs => "n-bs",
            SweepVariable::TransmitPower => "transmit-power",
            SweepVariable::Bandwidth => "bandwidth",
        }
    }

    /// `config` with this variable set to `value`.
    pub fn apply(self, config: &SystemConfig, value: f64) -> Result<SystemConfig> {
        let mut cfg = config.clone();
        let count = |what: &str| -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("{what} must be a positive integer, got {value}")))
            }
        };
        match self {
            SweepVariable::MeasurementLength => {
                let p = count("measurement length")?;
                if p % cfg.n_rf_bs != 0 {
                    return Err(Error::Config(format!(
                        "measurement length {p} is not a multiple of n_rf_bs = {}",
                        cfg.n_rf_bs
                    )));
                }
                cfg.q_bs = p / cfg.n_rf_bs;
            }
            SweepVariable::ScattererDistance => cfg.geometry.scatterer_range = [value, value],
            SweepVariable::UplinkSnr => {
                cfg.snr_db = value;
                cfg.p_t_ul_dbm = None;
            }
            SweepVariable::NBs => cfg.n_bs = count("n_bs")?,
            SweepVariable::TransmitPower => cfg.p_t_dl_dbm = value,
            SweepVariable::Bandwidth => cfg.bandwidth = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

/// A complete experiment description, loadable from TOML or JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub profile: Profile,
    /// Overrides applied on top of the profile's configuration.
    pub config: Value,
    pub sweep: Option<Sweep>,
    pub trials: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorScheme>,
    pub beamformers: Vec<BeamformingScheme>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            profile: Profile::Desk,
            config: Value::Object(Default::default()),
            sweep: None,
            trials: 20,
            seed: 0,
            estimators: EstimatorScheme::ALL.to_vec(),
            beamformers: BeamformingScheme::ALL.to_vec(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_path(path: &Path) -> Result<Self> {
        serde_json::from_value(read_document(path)?).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn base_config(&self) -> Result<SystemConfig> {
        match &self.config {
            Value::Null => config_with_overrides(self.profile, &Value::Object(Default::default())),
            v => config_with_overrides(self.profile, v),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::Config("trial count must be at least 1".into()));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::Config("sweep value list is empty".into()));
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("sweep values must be finite".into()));
            }
        }
        if self.estimators.is_empty() && self.beamformers.is_empty() {
            return Err(Error::Config("no schemes requested".into()));
        }
        self.base_config().map(|_| ())
    }

    /// `(sweep value, configuration)` pairs; one unlabelled point without a sweep.
    pub fn points(&self) -> Result<Vec<(Option<f64>, SystemConfig)>> {
        let base = self.base_config()?;
        match &self.sweep {
            None => Ok(vec![(None, base)]),
            Some(s) => s.values.iter().map(|&v| Ok((Some(v), s.variable.apply(&base, v)?))).collect(),
        }
    }

    /// Seed of trial `t`; shared across sweep values for paired comparisons.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        mix_seed(self.seed, &[trial as u64])
    }

    /// SHA-256 of the canonical JSON encoding of the spec.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        Sha256::digest(&bytes).iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// One per-trial metric with full lineage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub sweep_value: Option<f64>,
    pub trial: usize,
    pub seed: u64,
    pub scheme: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcarrierRow {
    pub sweep_value: Option<f64>,
    pub trial: usize,
    pub seed: u64,
    pub scheme: String,
    pub m: usize,
    pub f_m: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub sweep_value: Option<f64>,
    pub trial: usize,
    pub seed: u64,
    pub failure: StageFailure,
}

/// Aggregate of one `(sweep value, scheme, metric)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub sweep_value: Option<f64>,
    pub scheme: String,
    pub metric: String,
    pub n: usize,
    pub excluded: usize,
    pub mean: f64,
    pub median: f64,
    /// `10·log10(mean linear NMSE)` for `nmse_db`, RMSE in dB for squared
    /// errors, the mean otherwise.
    pub aggregate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub sweep_variable: Option<SweepVariable>,
    pub rows: Vec<AggregateRow>,
}

impl MetricsTable {
    pub fn get(&self, sweep_value: Option<f64>, scheme: &str, metric: &str) -> Option<&AggregateRow> {
        self.rows
            .iter()
            .find(|r| r.sweep_value == sweep_value && r.scheme == scheme && r.metric == metric)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub spec: ExperimentSpec,
    pub trials: Vec<TrialRow>,
    pub subcarriers: Vec<SubcarrierRow>,
    pub failures: Vec<FailureRow>,
    pub metrics: MetricsTable,
}

/// Metric slots every trial is expected to fill, in output order.
fn expected_slots(estimators: &[EstimatorScheme], beamformers: &[BeamformingScheme]) -> Vec<(String, &'static str)> {
    let mut slots: Vec<(String, &'static str)> = Vec::new();
    for e in estimators {
        slots.push((e.name().into(), "nmse_db"));
    }
    if locator_source(estimators).is_some() {
        slots.push(("locator".into(), "num_mpc"));
        for s in LocationStage::ALL {
            slots.push((s.name().into(), "sq_err_theta"));
            slots.push((s.name().into(), "sq_err_r"));
        }
    }
    for b in beamformers {
        for metric in ["se_mean", "se_spread", "se_edge"] {
            slots.push((b.name().into(), metric));
        }
    }
    slots
}

fn summary_rows(summary: &TrialSummary, sweep_value: Option<f64>, trial: usize) -> Vec<TrialRow> {
    let row = |scheme: &str, metric: &str, value: f64| TrialRow {
        sweep_value,
        trial,
        seed: summary.seed,
        scheme: scheme.into(),
        metric: metric.into(),
        value,
    };
    let mut rows = Vec::new();
    for e in &summary.estimates {
        rows.push(row(e.scheme.name(), "nmse_db", e.nmse_db));
    }
    if let Some(l) = summary.num_mpc {
        rows.push(row("locator", "num_mpc", l as f64));
    }
    for l in &summary.location {
        rows.push(row(l.stage.name(), "sq_err_theta", l.theta_error * l.theta_error));
        rows.push(row(l.stage.name(), "sq_err_r", l.r_error * l.r_error));
    }
    for b in &summary.beamforming {
        rows.push(row(b.scheme.name(), "se_mean", b.se.mean()));
        rows.push(row(b.scheme.name(), "se_spread", b.se.spread()));
        rows.push(row(b.scheme.name(), "se_edge", b.se.edge()));
    }
    rows
}

/// Aggregate of a metric's per-trial values.
pub fn aggregate_value(metric: &str, values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mean = |v: &mut dyn Iterator<Item = f64>| v.sum::<f64>() / values.len() as f64;
    match metric {
        "nmse_db" => {
            let lin = mean(&mut values.iter().map(|x| 10f64.powf(x / 10.0)));
            if lin > 0.0 {
                (10.0 * lin.log10()).max(DB_FLOOR)
            } else {
                DB_FLOOR
            }
        }
        m if m.starts_with("sq_err") => {
            let ms = mean(&mut values.iter().copied());
            if ms > 0.0 {
                (10.0 * ms.log10()).max(DB_FLOOR)
            } else {
                DB_FLOOR
            }
        }
        _ => mean(&mut values.iter().copied()),
    }
}

/// Aggregates per-trial rows into the metrics table.
pub fn aggregate(
    rows: &[TrialRow],
    sweep_values: &[Option<f64>],
    slots: &[(String, &'static str)],
    trials: usize,
    sweep_variable: Option<SweepVariable>,
) -> MetricsTable {
    let mut cells: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for r in rows {
        let vi = sweep_values.iter().position(|v| *v == r.sweep_value);
        let si = slots.iter().position(|(s, m)| *s == r.scheme && *m == r.metric);
        if let (Some(vi), Some(si)) = (vi, si) {
            cells.entry((vi, si)).or_default().push(r.value);
        }
    }
    let mut out = Vec::new();
    for (vi, v) in sweep_values.iter().enumerate() {
        for (si, (scheme, metric)) in slots.iter().enumerate() {
            let values = cells.get(&(vi, si)).cloned().unwrap_or_default();
            let n = values.len();
            out.push(AggregateRow {
                sweep_value: *v,
                scheme: scheme.clone(),
                metric: (*metric).into(),
                n,
                excluded: trials - n,
                mean: if n > 0 { values.iter().sum::<f64>() / n as f64 } else { f64::NAN },
                median: median(&values),
                aggregate: aggregate_value(metric, &values),
            });
        }
    }
    MetricsTable {
        sweep_variable,
        rows: out,
    }
}

/// Runs every `(sweep value, trial)` on a pool of `workers` threads.
/// Results are collected in trial order, so outputs do not depend on `workers`.
pub fn run_pipeline(spec: &ExperimentSpec, workers: usize) -> Result<RunResult> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let points = spec.points()?;
    let mut trials = Vec::new();
    let mut subcarriers = Vec::new();
    let mut failures = Vec::new();
    for (value, cfg) in &points {
        let freqs = cfg.subcarrier_freqs();
        let ctx = pool.install(|| TrialContext::new(cfg.clone(), &spec.estimators, &spec.beamformers))?;
        let outcomes: Vec<(usize, u64, Result<TrialSummary>)> = pool.install(|| {
            (0..spec.trials)
                .into_par_iter()
                .map(|t| {
                    let seed = spec.trial_seed(t);
                    (t, seed, run_trial(&ctx, seed).map(|a| a.summary))
                })
                .collect()
        });
        for (t, seed, outcome) in outcomes {
            match outcome {
                Ok(summary) => {
                    trials.extend(summary_rows(&summary, *value, t));
                    for b in &summary.beamforming {
                        for (m, se) in b.se.per_subcarrier.iter().enumerate() {
                            subcarriers.push(SubcarrierRow {
                                sweep_value: *value,
                                trial: t,
                                seed,
                                scheme: b.scheme.name().into(),
                                m,
                                f_m: freqs[m],
                                se: *se,
                            });
                        }
                    }
                    failures.extend(summary.failures.into_iter().map(|failure| FailureRow {
                        sweep_value: *value,
                        trial: t,
                        seed,
                        failure,
                    }));
                }
                Err(e) => failures.push(FailureRow {
                    sweep_value: *value,
                    trial: t,
                    seed,
                    failure: StageFailure {
                        stage: "trial".into(),
                        kind: e.kind().into(),
                        message: e.to_string(),
                    },
                }),
            }
        }
    }
    let values: Vec<Option<f64>> = points.iter().map(|(v, _)| *v).collect();
    let mut estimators = spec.estimators.clone();
    estimators.sort();
    estimators.dedup();
    let mut beamformers = spec.beamformers.clone();
    beamformers.sort();
    beamformers.dedup();
    let slots = expected_slots(&estimators, &beamformers);
    let metrics = aggregate(&trials, &values, &slots, spec.trials, spec.sweep.as_ref().map(|s| s.variable));
    Ok(RunResult {
        spec: spec.clone(),
        trials,
        subcarriers,
        failures,
        metrics,
    })
}

fn fmt_value(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl RunResult {
    fn sweep_name(&self) -> &'static str {
        self.spec.sweep.as_ref().map_or("none", |s| s.variable.name())
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("sweep_variable,sweep_value,scheme,metric,n,excluded,mean,median,aggregate\n");
        for r in &self.metrics.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                self.sweep_name(),
                fmt_value(r.sweep_value),
                r.scheme,
                r.metric,
                r.n,
                r.excluded,
                r.mean,
                r.median,
                r.aggregate
            );
        }
        s
    }

    pub fn trials_csv(&self) -> String {
        let mut s = String::from("sweep_variable,sweep_value,trial,seed,scheme,metric,value\n");
        for r in &self.trials {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                self.sweep_name(),
                fmt_value(r.sweep_value),
                r.trial,
                r.seed,
                r.scheme,
                r.metric,
                r.value
            );
        }
        s
    }

    pub fn subcarriers_csv(&self) -> String {
        let mut s = String::from("sweep_variable,sweep_value,trial,seed,scheme,m,f_m,se\n");
        for r in &self.subcarriers {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                self.sweep_name(),
                fmt_value(r.sweep_value),
                r.trial,
                r.seed,
                r.scheme,
                r.m,
                r.f_m,
                r.se
            );
        }
        s
    }

    pub fn failures_csv(&self) -> String {
        let mut s = String::from("sweep_variable,sweep_value,trial,seed,stage,kind,message\n");
        for r in &self.failures {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                self.sweep_name(),
                fmt_value(r.sweep_value),
                r.trial,
                r.seed,
                csv_text(&r.failure.stage),
                r.failure.kind,
                csv_text(&r.failure.message)
            );
        }
        s
    }

    pub fn manifest(&self) -> Value {
        let excluded: usize = self.metrics.rows.iter().map(|r| r.excluded).sum();
        serde_json::json!({
            "name": self.spec.name,
            "code_version": env!("CARGO_PKG_VERSION"),
            "config_hash": self.spec.hash(),
            "spec": self.spec,
            "trial_seeds": (0..self.spec.trials).map(|t| self.spec.trial_seed(t)).collect::<Vec<_>>(),
            "failures": self.failures.len(),
            "excluded_cells": excluded,
            "files": OUTPUT_FILES,
        })
    }

    /// Writes every output file into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let contents = [
            self.metrics_csv(),
            self.trials_csv(),
            self.subcarriers_csv(),
            self.failures_csv(),
            serde_json::to_string_pretty(&self.manifest())? + "\n",
        ];
        let mut written = Vec::new();
        for (name, text) in OUTPUT_FILES.iter().zip(contents) {
            let path = dir.join(name);
            std::fs::write(&path, text)?;
            written.push(path);
        }
        Ok(written)
    }
}

pub const OUTPUT_FILES: [&str; 5] = ["metrics.csv", "trials.csv", "se_subcarriers.csv", "failures.csv", "manifest.json"];

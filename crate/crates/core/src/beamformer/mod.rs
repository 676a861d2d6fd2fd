//! Squint-robust hybrid beamforming from sensed locations.

mod broadened;
mod se;
mod somp;
mod squint;

pub use broadened::{
    broadened_beam, far_field_broadened_beam, styled_beam, subarray_beam, subarray_count, BeamGeometry, BeamStyle,
    BroadenedBeam,
};
pub use se::{spectral_efficiency, subcarrier_se, SeProfile};
pub use somp::{mmse_combiners, optimal_precoders, scale_to_power, somp_hybrid, somp_select, HybridPrecoder};
pub use squint::{array_gain, focused_beam, presquint_position, squint_position, SquintTarget};

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelTensor, LinkDirection};
use crate::error::{Error, Result};
use crate::locator::LocationReport;
use crate::numerics::{matmul, CMatrix};
use crate::pilot::dft_matrix;
use crate::scenario::{dbm_to_watt, PolarLink, ScenarioGeometry, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    Ut,
    Scatterer,
    SubarrayCenter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnTag {
    pub kind: ColumnKind,
    pub r: f64,
    pub theta: f64,
    pub g: usize,
    pub n_sub: usize,
}

/// Analog beams on sensed locations, one column per tag.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamCodebook {
    pub columns: CMatrix,
    pub tags: Vec<ColumnTag>,
    pub style: BeamStyle,
    /// Columns whose subarray count fell back to `G = N`.
    pub infeasible: usize,
    /// Columns whose pre-squint span leaves the visible region; these use the focused beam.
    pub out_of_view: usize,
}

impl BeamCodebook {
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

/// Columns for arbitrary `(kind, r, θ)` targets.
pub fn codebook_for_points(points: &[(ColumnKind, f64, f64)], geom: &BeamGeometry, style: BeamStyle) -> Result<BeamCodebook> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("codebook needs at least one location".into()));
    }
    let mut columns = CMatrix::zeros(geom.n, points.len());
    let mut tags = Vec::with_capacity(points.len());
    let mut infeasible = 0;
    let mut out_of_view = 0;
    for (c, &(kind, r, theta)) in points.iter().enumerate() {
        let beam = match styled_beam(style, r, theta, geom) {
            Err(Error::OutOfVisibleRegion { .. }) => {
                out_of_view += 1;
                styled_beam(BeamStyle::Focused, r, theta, geom)?
            }
            other => other?,
        };
        infeasible += usize::from(!beam.feasible);
        columns.set_column(c, &beam.vector);
        tags.push(ColumnTag {
            kind,
            r,
            theta,
            g: beam.g,
            n_sub: beam.n_sub,
        });
    }
    Ok(BeamCodebook {
        columns,
        tags,
        style,
        infeasible,
        out_of_view,
    })
}

/// Sensed locations in codebook order: refined UT, scatterers, subarray centers.
pub fn report_points(report: &LocationReport) -> Vec<(ColumnKind, f64, f64)> {
    let polar = |p: [f64; 2], kind| {
        let l = PolarLink::from_cartesian(p[0], p[1]);
        (kind, l.r, l.theta)
    };
    let mut points = vec![polar(report.refined_ut, ColumnKind::Ut)];
    points.extend(report.scatterer_positions().into_iter().map(|p| polar(p, ColumnKind::Scatterer)));
    points.extend(report.subarray_centers().map(|v| (ColumnKind::SubarrayCenter, v.r_bs, v.theta_bs)));
    points
}

/// BS codebook with one column per sensed location (`L̂′ + 1` columns).
pub fn build_codebook(report: &LocationReport, geom: &BeamGeometry, style: BeamStyle) -> Result<BeamCodebook> {
    codebook_for_points(&report_points(report), geom, style)
}

/// Unit-norm DFT beams.
pub fn dft_codebook(n: usize) -> CMatrix {
    dft_matrix(n) / Complex64::new((n as f64).sqrt(), 0.0)
}

/// UT-side angles of the sensed paths: scatterer VAs and the LoS direction.
pub fn ut_side_angles(report: &LocationReport) -> Vec<f64> {
    let mut angles: Vec<f64> = report.scatterers().filter_map(|v| v.theta_ut).collect();
    if report.subarray_centers().next().is_some() {
        let bs_to_ut = report.refined_ut[1].atan2(report.refined_ut[0]);
        angles.insert(0, (report.orientation - bs_to_ut).sin().asin());
    }
    angles
}

/// UT combining codebook: far-field broadened receive beams at the sensed
/// UT-side angles, followed by the DFT beams. Angles whose squint span leaves
/// the visible region are dropped.
pub fn ut_codebook(angles: &[f64], geom: &BeamGeometry) -> Result<CMatrix> {
    let mut beams = Vec::with_capacity(angles.len());
    for &theta in angles {
        match far_field_broadened_beam(theta, geom) {
            Ok(b) => beams.push(b.vector.map(|z| z.conj())),
            Err(Error::OutOfVisibleRegion { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let mut cb = CMatrix::zeros(geom.n, beams.len() + geom.n);
    for (c, b) in beams.iter().enumerate() {
        cb.set_column(c, b);
    }
    cb.columns_mut(beams.len(), geom.n).copy_from(&dft_codebook(geom.n));
    Ok(cb)
}

/// Downlink transmission strategies compared in the SE experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeamformingScheme {
    /// SOMP over broadened beams on the sensed locations.
    Proposed,
    /// SOMP over carrier-focused near-field beams on the sensed locations.
    Focused,
    /// SOMP over angle-only broadened beams on the sensed locations.
    FarField,
    /// SOMP over carrier-focused beams on the true locations.
    IdealCenter,
    /// SOMP over the DFT codebook.
    DftSomp,
}

impl BeamformingScheme {
    pub const ALL: [BeamformingScheme; 5] = [
        BeamformingScheme::Proposed,
        BeamformingScheme::Focused,
        BeamformingScheme::FarField,
        BeamformingScheme::IdealCenter,
        BeamformingScheme::DftSomp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BeamformingScheme::Proposed => "proposed",
            BeamformingScheme::Focused => "focused",
            BeamformingScheme::FarField => "far-field",
            BeamformingScheme::IdealCenter => "ideal-center",
            BeamformingScheme::DftSomp => "dft-somp",
        }
    }
}

impl fmt::Display for BeamformingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BeamformingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown beamforming scheme '{s}'")))
    }
}

/// SE of one scheme on one downlink channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformingOutcome {
    pub scheme: BeamformingScheme,
    pub se: SeProfile,
    pub n_rf: usize,
    pub n_streams: usize,
    /// BS codebook column indices picked by SOMP.
    pub selected: Vec<usize>,
    pub flags: Vec<String>,
}

/// Per-subcarrier transmit power and noise variance.
pub fn downlink_budget(config: &SystemConfig) -> (f64, f64) {
    let m = config.m_subcarriers as f64;
    (dbm_to_watt(config.p_t_dl_dbm) / m, config.noise_power() / m)
}

/// True locations in codebook order: UT, then scatterers.
pub fn truth_points(scenario: &ScenarioGeometry) -> Vec<(ColumnKind, f64, f64)> {
    let ut = scenario.ut_polar();
    let mut points = vec![(ColumnKind::Ut, ut.r, ut.theta)];
    points.extend(scenario.scatterers.iter().map(|s| (ColumnKind::Scatterer, s.bs.r, s.bs.theta)));
    points
}

/// Builds the precoder and hybrid MMSE combiner of `scheme` and evaluates SE.
///
/// `truth` holds the true locations and is required by
/// [`BeamformingScheme::IdealCenter`] only.
pub fn evaluate_scheme(
    scheme: BeamformingScheme,
    h_dl: &ChannelTensor,
    report: &LocationReport,
    truth: Option<&[(ColumnKind, f64, f64)]>,
    config: &SystemConfig,
) -> Result<BeamformingOutcome> {
    if h_dl.direction != LinkDirection::Downlink {
        return Err(Error::InvalidArgument("beamforming needs the downlink channel".into()));
    }
    let bs = BeamGeometry::bs(config);
    let (power, sigma2) = downlink_budget(config);
    let mut flags = Vec::new();

    let codebook = match scheme {
        BeamformingScheme::Proposed => Some(build_codebook(report, &bs, BeamStyle::Broadened)?),
        BeamformingScheme::Focused => Some(build_codebook(report, &bs, BeamStyle::Focused)?),
        BeamformingScheme::FarField => Some(build_codebook(report, &bs, BeamStyle::FarFieldBroadened)?),
        BeamformingScheme::IdealCenter => {
            let points = truth.ok_or_else(|| {
                Error::InvalidArgument("ideal center-frequency steering needs the true locations".into())
            })?;
            Some(codebook_for_points(points, &bs, BeamStyle::Focused)?)
        }
        BeamformingScheme::DftSomp => None,
    };
    if let Some(cb) = &codebook {
        if cb.infeasible > 0 {
            flags.push(format!("{} columns fell back to G = N", cb.infeasible));
        }
        if cb.out_of_view > 0 {
            flags.push(format!("{} columns left the visible region and use the focused beam", cb.out_of_view));
        }
    }
    let columns = match &codebook {
        Some(cb) => cb.columns.clone(),
        None => dft_codebook(config.n_bs),
    };
    let n_rf = config.n_rf_bs.min(columns.ncols());
    if n_rf < config.n_rf_bs {
        flags.push(format!("codebook holds {} columns, using {n_rf} RF chains", columns.ncols()));
    }
    let n_s = config.n_streams.min(n_rf);
    let f_opt = optimal_precoders(h_dl, n_s)?;
    let p = somp_hybrid(&f_opt, &columns, n_rf, power)?;
    if p.rank_deficient {
        flags.push("selected BS beams are rank deficient".into());
    }
    let precoders = p.effective();

    let ut = BeamGeometry::ut(config);
    let w_mmse = mmse_combiners(h_dl, &precoders, sigma2)?;
    let ut_cb = ut_codebook(&ut_side_angles(report), &ut)?;
    let w = somp_select(&w_mmse, &ut_cb, config.n_rf_ut.min(ut_cb.ncols()))?;
    if w.rank_deficient {
        flags.push("selected UT beams are rank deficient".into());
    }
    let se = spectral_efficiency(h_dl, &precoders, &w.effective(), sigma2)?;
    Ok(BeamformingOutcome {
        scheme,
        se,
        n_rf,
        n_streams: n_s,
        selected: p.selected,
        flags,
    })
}

/// `F_RF·F_BB` with `F_BB` rotated by a unitary; SE must not change.
pub fn rotate_baseband(p: &HybridPrecoder, unitary: &CMatrix) -> Vec<CMatrix> {
    p.f_bb.iter().map(|bb| matmul(&p.f_rf, &matmul(bb, unitary))).collect()
}

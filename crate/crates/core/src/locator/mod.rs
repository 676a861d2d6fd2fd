//! Location sensing from the sparse channel estimate: path counting, virtual
//! anchor (VA) extraction, bearing-line w-LS and TDoA refinement.

mod mdl;
mod refine;
mod tdoa;
mod vas;
mod wls;

pub use mdl::{estimate_num_mpc, mdl_order, mdl_scores, smoothed_covariance};
pub use refine::{model_tdoa, refine_gradient, tdoa_gradient, tdoa_loss, Refinement};
pub use tdoa::{circular_mean, matched_delay, path_delay, tdoa_measure, unwrap_delay, wrap_delay, DelayGrid};
pub use vas::{extract_and_cluster, lattice_range, map_and_partition, ut_angle_grid, ut_side_match, Extraction, VaClass};
pub use wls::{coarse_wls, coarse_wls_with, lattice_weight, solve_bearing_lines, CoarseFix, ORIENTATION_SCAN};

use serde::{Deserialize, Serialize};

use crate::dictionary::PolarLattice;
use crate::error::{Error, Result};
use crate::estimator::SparseChannelEstimate;
use crate::pilot::MeasurementSet;
use crate::scenario::SystemConfig;

/// A sensed virtual anchor: a lattice peak mapped to BS-frame coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaRecord {
    /// Flat lattice index of the peak.
    pub index: usize,
    pub theta_bs: f64,
    pub r_bs: f64,
    pub x: f64,
    pub y: f64,
    pub energy: f64,
    pub class: VaClass,
    pub theta_ut: Option<f64>,
    /// TDoA against the subarray centers, seconds (scatterers only).
    pub tdoa: Option<f64>,
}

impl VaRecord {
    pub fn new(index: usize, theta_bs: f64, r_bs: f64, energy: f64) -> Self {
        Self {
            index,
            theta_bs,
            r_bs,
            x: r_bs * theta_bs.cos(),
            y: r_bs * theta_bs.sin(),
            energy,
            class: VaClass::Unclassified,
            theta_ut: None,
            tdoa: None,
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationReport {
    /// MDL path count `L̂′` after clamping to `[1, l_max + g_los]`.
    pub num_mpc: usize,
    pub vas: Vec<VaRecord>,
    /// Centroid of the subarray-center VAs, if any.
    pub los_only_ut: Option<[f64; 2]>,
    pub coarse_ut: [f64; 2],
    pub orientation: f64,
    pub refined_ut: [f64; 2],
    /// Refined positions of the scatterer VAs that carry a TDoA, in VA order.
    pub refined_scatterers: Vec<[f64; 2]>,
    /// Indices into `vas` matching `refined_scatterers`.
    pub refined_from: Vec<usize>,
    /// TDoA loss (s²) before refinement and after each iteration.
    pub loss_trace: Vec<f64>,
    /// Delay ambiguity period `M/BW`, seconds.
    pub delay_period: f64,
    pub flags: Vec<String>,
}

impl LocationReport {
    pub fn subarray_centers(&self) -> impl Iterator<Item = &VaRecord> {
        self.vas.iter().filter(|v| v.class == VaClass::SubarrayCenter)
    }

    pub fn scatterers(&self) -> impl Iterator<Item = &VaRecord> {
        self.vas.iter().filter(|v| v.class == VaClass::Scatterer)
    }

    /// Refined position of every scatterer VA, falling back to its mapped position.
    pub fn scatterer_positions(&self) -> Vec<[f64; 2]> {
        self.vas
            .iter()
            .enumerate()
            .filter(|(_, v)| v.class == VaClass::Scatterer)
            .map(|(i, v)| match self.refined_from.iter().position(|&j| j == i) {
                Some(k) => self.refined_scatterers[k],
                None => v.position(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocatorOptions {
    pub k_smooth: usize,
    pub ut_rho: usize,
    pub t_grd: usize,
    pub d_ut: f64,
    pub los_present: bool,
    pub max_paths: usize,
    pub move_scatterers: bool,
}

impl LocatorOptions {
    pub fn from_config(config: &SystemConfig) -> Self {
        Self {
            k_smooth: config.k_smooth(),
            ut_rho: config.ut_rho,
            t_grd: config.t_grd,
            d_ut: config.ut_aperture(),
            los_present: config.los_present,
            max_paths: config.l_max + config.g_los,
            move_scatterers: true,
        }
    }
}

/// Full sensing chain on one trial.
pub fn locate(
    measurements: &MeasurementSet,
    estimate: &SparseChannelEstimate,
    lattice: &PolarLattice,
    config: &SystemConfig,
    seed: u64,
) -> Result<LocationReport> {
    let opts = LocatorOptions::from_config(config);
    let mut flags = Vec::new();
    let counted = estimate_num_mpc(measurements, opts.k_smooth, config.n_bs)?;
    let num_mpc = counted.clamp(1, opts.max_paths.max(1));
    if num_mpc != counted {
        flags.push(format!("path_count_clamped_from_{counted}"));
    }

    let extraction = extract_and_cluster(estimate, lattice, num_mpc, seed)?;
    if extraction.reduced {
        flags.push(format!("clusters_reduced_to_{}", extraction.vas.len()));
    }
    let mut vas = extraction.vas;
    if vas.is_empty() {
        return Err(Error::DegenerateGeometry("no lattice point above the noise threshold".into()));
    }
    map_and_partition(&mut vas, opts.d_ut, opts.los_present);
    let grid = ut_angle_grid(config.n_ut, opts.ut_rho);
    ut_side_match(estimate, &mut vas, &grid, &config.wavelengths(), config.spacing())?;

    let centers: Vec<[f64; 2]> = vas.iter().filter(|v| v.class == VaClass::SubarrayCenter).map(|v| v.position()).collect();
    let los_only_ut = (!centers.is_empty()).then(|| {
        let n = centers.len() as f64;
        [centers.iter().map(|p| p[0]).sum::<f64>() / n, centers.iter().map(|p| p[1]).sum::<f64>() / n]
    });

    let (coarse_ut, orientation) = match coarse_wls(&vas, lattice) {
        Ok(fix) => ([fix.x, fix.y], fix.phi),
        Err(e) => match los_only_ut {
            Some(p) => {
                flags.push(format!("coarse_fallback_los_only: {e}"));
                let phi = vas
                    .iter()
                    .filter(|v| v.class == VaClass::SubarrayCenter)
                    .map(|v| v.theta_bs + v.theta_ut.unwrap_or(0.0))
                    .sum::<f64>()
                    / centers.len() as f64;
                (p, phi)
            }
            None => return Err(e),
        },
    };

    let delays = tdoa_measure(estimate, &mut vas, &config.subcarrier_freqs())?;
    let mut refined_from = Vec::new();
    let mut start = Vec::new();
    let mut measured = Vec::new();
    for (i, va) in vas.iter_mut().enumerate() {
        if let Some(w) = va.tdoa {
            let unwrapped = unwrap_delay(w, model_tdoa(coarse_ut, va.position()), delays.period);
            va.tdoa = Some(unwrapped);
            refined_from.push(i);
            start.push(va.position());
            measured.push(unwrapped);
        }
    }
    let (refined_ut, refined_scatterers, loss_trace) = if measured.is_empty() {
        flags.push("refinement_skipped_no_tdoa".into());
        (coarse_ut, start, Vec::new())
    } else {
        let r = refine_gradient(coarse_ut, &start, &measured, opts.t_grd, opts.move_scatterers);
        if r.skipped > 0 {
            flags.push(format!("refinement_skipped_{}_updates", r.skipped));
        }
        (r.ut, r.scatterers, r.loss_trace)
    };

    Ok(LocationReport {
        num_mpc,
        vas,
        los_only_ut,
        coarse_ut,
        orientation,
        refined_ut,
        refined_scatterers,
        refined_from,
        loss_trace,
        delay_period: delays.period,
        flags,
    })
}

use serde::{Deserialize, Serialize};

use super::VaRecord;
use crate::channel::steering_vector;
use crate::dictionary::PolarLattice;
use crate::error::{Error, Result};
use crate::estimator::SparseChannelEstimate;
use crate::numerics::{kmeans, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VaClass {
    Unclassified,
    /// LoS component seen through a UT subarray center (set 𝒢).
    SubarrayCenter,
    Scatterer,
}

/// Range assigned to a lattice point. Far-ring points map to the boundary
/// between the far ring and ring 1, i.e. half of ring 1's inverse distance.
pub fn lattice_range(lattice: &PolarLattice, n: usize, s: usize) -> f64 {
    if s == 0 {
        2.0 / lattice.inv_r(n, 1)
    } else {
        1.0 / lattice.inv_r(n, s)
    }
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub vas: Vec<VaRecord>,
    /// Survivors above the threshold, before clustering.
    pub survivors: usize,
    /// Set when fewer survivors than requested clusters were available.
    pub reduced: bool,
}

/// Thresholds lattice energies at `N_UT·Σ_m σ̂²[m]`, clusters the survivors in
/// grid-index coordinates and keeps the strongest point of each cluster.
pub fn extract_and_cluster(
    estimate: &SparseChannelEstimate,
    lattice: &PolarLattice,
    num_mpc: usize,
    seed: u64,
) -> Result<Extraction> {
    if num_mpc == 0 {
        return Err(Error::InvalidArgument("need at least one path to cluster".into()));
    }
    if estimate.n_columns() != lattice.size() {
        return Err(Error::Shape(format!(
            "estimate has {} rows for a {}-point lattice",
            estimate.n_columns(),
            lattice.size()
        )));
    }
    let n_ut = estimate.hp.first().map_or(0, |h| h.ncols());
    let threshold = n_ut as f64 * estimate.noise_var.iter().sum::<f64>();
    let energy = estimate.row_energy();
    let selected: Vec<usize> = (0..energy.len()).filter(|&k| energy[k] > threshold).collect();
    let k = num_mpc.min(selected.len());
    let reduced = k < num_mpc;
    if k == 0 {
        return Ok(Extraction { vas: Vec::new(), survivors: 0, reduced });
    }
    let points: Vec<[f64; 2]> = selected
        .iter()
        .map(|&i| {
            let (n, s) = lattice.split(i);
            [n as f64, s as f64]
        })
        .collect();
    let clusters = kmeans(&points, k, seed)?;
    let mut peaks: Vec<Option<usize>> = vec![None; k];
    for (j, &c) in clusters.labels.iter().enumerate() {
        let idx = selected[j];
        if peaks[c].is_none_or(|p| energy[idx] > energy[p]) {
            peaks[c] = Some(idx);
        }
    }
    let mut vas: Vec<VaRecord> = peaks
        .into_iter()
        .flatten()
        .map(|idx| {
            let (n, s) = lattice.split(idx);
            VaRecord::new(idx, lattice.theta(n), lattice_range(lattice, n, s), energy[idx])
        })
        .collect();
    vas.sort_by(|a, b| b.energy.total_cmp(&a.energy).then(a.index.cmp(&b.index)));
    Ok(Extraction { vas, survivors: selected.len(), reduced })
}

/// Marks the strongest VA and every VA within `d_ut` of it as subarray centers;
/// the rest become scatterers. With `los_present == false` all are scatterers.
pub fn map_and_partition(vas: &mut [VaRecord], d_ut: f64, los_present: bool) {
    let Some(anchor) = (0..vas.len()).max_by(|&a, &b| vas[a].energy.total_cmp(&vas[b].energy).then(b.cmp(&a)))
    else {
        return;
    };
    let (ax, ay) = (vas[anchor].x, vas[anchor].y);
    for va in vas.iter_mut() {
        let near = ((va.x - ax).powi(2) + (va.y - ay).powi(2)).sqrt() <= d_ut;
        va.class = if los_present && near { VaClass::SubarrayCenter } else { VaClass::Scatterer };
    }
}

/// Far-field UT angular grid `sinθ = (2n − ρN)/(ρN)`, `n = 0..ρN`.
pub fn ut_angle_grid(n_ut: usize, rho: usize) -> Vec<f64> {
    let na = (rho * n_ut) as f64;
    (0..rho * n_ut).map(|n| ((2.0 * n as f64 - na) / na).asin()).collect()
}

/// UT-side angle per VA by matched filtering its row of `Ĥ^P` against
/// far-field UT manifolds, keeping the best subcarrier per grid angle.
pub fn ut_side_match(
    estimate: &SparseChannelEstimate,
    vas: &mut [VaRecord],
    grid: &[f64],
    wavelengths: &[f64],
    spacing: f64,
) -> Result<()> {
    if wavelengths.len() != estimate.m() {
        return Err(Error::Shape(format!("{} wavelengths for {} subcarriers", wavelengths.len(), estimate.m())));
    }
    let n_ut = estimate.hp.first().map_or(0, |h| h.ncols());
    let manifolds: Vec<Vec<_>> = wavelengths
        .iter()
        .map(|&lambda| {
            grid.iter()
                .map(|&t| steering_vector(t, f64::INFINITY, lambda, n_ut, spacing))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    for va in vas.iter_mut() {
        let mut best = (f64::NEG_INFINITY, 0);
        for (g, _) in grid.iter().enumerate() {
            let score = (0..estimate.m())
                .map(|m| {
                    let row = estimate.hp[m].row(va.index);
                    let a = &manifolds[m][g];
                    row.iter().zip(a.iter()).map(|(h, a)| h * a.conj()).sum::<C64>().norm_sqr()
                })
                .fold(0.0, f64::max);
            if score > best.0 {
                best = (score, g);
            }
        }
        va.theta_ut = Some(grid[best.1]);
    }
    Ok(())
}

use std::f64::consts::{FRAC_PI_2, PI};

use super::{VaClass, VaRecord};
use crate::dictionary::PolarLattice;
use crate::error::{Error, Result};

/// Points of the orientation scan used when the LoS path is blocked.
pub const ORIENTATION_SCAN: usize = 721;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseFix {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    /// Weighted squared residual of the bearing-line system.
    pub residual: f64,
}

/// Weighted intersection of lines through `anchors[l]` with direction `psi[l]`.
///
/// Each line contributes the row `[sinψ, −cosψ]·[x, y] = sinψ·x_l − cosψ·y_l`,
/// so residuals are perpendicular distances.
pub fn solve_bearing_lines(anchors: &[[f64; 2]], psi: &[f64], weights: &[f64]) -> Result<([f64; 2], f64)> {
    if anchors.len() != psi.len() || anchors.len() != weights.len() {
        return Err(Error::Shape("bearing inputs differ in length".into()));
    }
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((p, &t), &w) in anchors.iter().zip(psi).zip(weights) {
        let (s, c) = t.sin_cos();
        let rhs = s * p[0] - c * p[1];
        a11 += w * s * s;
        a12 -= w * s * c;
        a22 += w * c * c;
        b1 += w * s * rhs;
        b2 -= w * c * rhs;
    }
    let det = a11 * a22 - a12 * a12;
    let scale = (a11 + a22).powi(2);
    if !(det > 1e-12 * scale) {
        return Err(Error::DegenerateGeometry("bearing lines are (nearly) parallel".into()));
    }
    let x = (a22 * b1 - a12 * b2) / det;
    let y = (a11 * b2 - a12 * b1) / det;
    let residual = anchors
        .iter()
        .zip(psi)
        .zip(weights)
        .map(|((p, &t), &w)| {
            let (s, c) = t.sin_cos();
            w * (s * (x - p[0]) - c * (y - p[1])).powi(2)
        })
        .sum();
    Ok(([x, y], residual))
}

/// `1/|r̂ − N(θ̂, r̂)|²`; far-ring points reuse ring 1's weight.
pub fn lattice_weight(lattice: &PolarLattice, index: usize) -> f64 {
    let (n, s) = lattice.split(index);
    let s = s.max(1);
    let r = 1.0 / lattice.inv_r(n, s);
    let gap = (r - lattice.neighbor_ring_distance(n, s)).abs();
    if gap.is_finite() && gap > 0.0 {
        1.0 / (gap * gap)
    } else {
        // single-ring lattice: no neighbour, uniform weights
        1.0
    }
}

/// Coarse UT position and orientation from classified VAs with UT-side angles.
///
/// With subarray centers present, `φ̂` is their mean `θ^BS + θ^UT`; otherwise
/// `φ` is scanned over `[0, π)` and the smallest weighted residual wins.
pub fn coarse_wls(vas: &[VaRecord], lattice: &PolarLattice) -> Result<CoarseFix> {
    let weights: Vec<f64> = vas.iter().map(|v| lattice_weight(lattice, v.index)).collect();
    coarse_wls_with(vas, &weights)
}

/// [`coarse_wls`] with caller-supplied row weights.
pub fn coarse_wls_with(vas: &[VaRecord], weights: &[f64]) -> Result<CoarseFix> {
    if weights.len() != vas.len() {
        return Err(Error::Shape(format!("{} weights for {} VAs", weights.len(), vas.len())));
    }
    let mut anchors = Vec::with_capacity(vas.len());
    let mut ut_angles = Vec::with_capacity(vas.len());
    let mut los_sum = 0.0;
    let mut los_count = 0usize;
    for va in vas {
        let theta_ut = va
            .theta_ut
            .ok_or_else(|| Error::InvalidArgument(format!("VA {} has no UT-side angle", va.index)))?;
        anchors.push([va.x, va.y]);
        match va.class {
            VaClass::SubarrayCenter => {
                los_sum += va.theta_bs + theta_ut;
                los_count += 1;
                ut_angles.push(None);
            }
            VaClass::Scatterer => ut_angles.push(Some(theta_ut)),
            VaClass::Unclassified => {
                return Err(Error::InvalidArgument("coarse_wls needs partitioned VAs".into()));
            }
        }
    }
    if los_count > 0 {
        if vas.len() < 2 {
            return Err(Error::DegenerateGeometry("need at least two VAs with LoS".into()));
        }
        let phi = los_sum / los_count as f64;
        let centers: Vec<[f64; 2]> = anchors
            .iter()
            .zip(&ut_angles)
            .filter(|(_, t)| t.is_none())
            .map(|(p, _)| *p)
            .collect();
        let prior = [
            centers.iter().map(|p| p[0]).sum::<f64>() / centers.len() as f64,
            centers.iter().map(|p| p[1]).sum::<f64>() / centers.len() as f64,
        ];
        let psi: Vec<f64> = anchors
            .iter()
            .zip(&ut_angles)
            .map(|(p, t)| match t {
                None => phi - FRAC_PI_2,
                // a linear array cannot tell front from back: keep the
                // branch whose bearing line passes closer to the LoS VA
                Some(t) => {
                    let back = phi - t;
                    let front = phi + t;
                    if line_distance(*p, front, prior) < line_distance(*p, back, prior) {
                        front
                    } else {
                        back
                    }
                }
            })
            .collect();
        let (p, residual) = solve_bearing_lines(&anchors, &psi, weights)?;
        return Ok(CoarseFix { x: p[0], y: p[1], phi, residual });
    }
    if vas.len() < 3 {
        return Err(Error::DegenerateGeometry("need at least three VAs without LoS".into()));
    }
    let mut best: Option<CoarseFix> = None;
    for i in 0..ORIENTATION_SCAN {
        let phi = PI * i as f64 / ORIENTATION_SCAN as f64;
        let psi: Vec<f64> = ut_angles.iter().map(|t| phi - t.unwrap_or(FRAC_PI_2)).collect();
        if let Ok((p, residual)) = solve_bearing_lines(&anchors, &psi, weights) {
            if best.is_none_or(|b| residual < b.residual) {
                best = Some(CoarseFix { x: p[0], y: p[1], phi, residual });
            }
        }
    }
    best.ok_or_else(|| Error::DegenerateGeometry("no orientation gives a regular bearing system".into()))
}

/// Perpendicular distance from `q` to the line through `p` with direction `psi`.
fn line_distance(p: [f64; 2], psi: f64, q: [f64; 2]) -> f64 {
    let (s, c) = psi.sin_cos();
    (s * (q[0] - p[0]) - c * (q[1] - p[1])).abs()
}

use serde::{Deserialize, Serialize};

use crate::channel::ChannelTensor;
use crate::error::{Error, Result};
use crate::numerics::frobenius_sq;

/// Reported in place of −∞ dB.
pub const DB_FLOOR: f64 = -300.0;

fn to_db(ratio: f64) -> f64 {
    if ratio > 0.0 {
        (10.0 * ratio.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

/// Subcarrier-averaged `‖H − Ĥ‖²_F / ‖H‖²_F` in dB.
pub fn nmse_db(truth: &ChannelTensor, estimate: &ChannelTensor) -> Result<f64> {
    if truth.m() != estimate.m() {
        return Err(Error::Shape(format!("{} vs {} subcarriers", truth.m(), estimate.m())));
    }
    let mut acc = 0.0;
    for (h, e) in truth.mats.iter().zip(&estimate.mats) {
        if h.shape() != e.shape() {
            return Err(Error::Shape(format!("{:?} vs {:?}", h.shape(), e.shape())));
        }
        let den = frobenius_sq(h);
        if !(den > 0.0) {
            return Err(Error::Domain("NMSE against an all-zero channel".into()));
        }
        acc += frobenius_sq(&(h - e)) / den;
    }
    Ok(to_db(acc / truth.m() as f64))
}

/// Root mean square of `errors` as `20·log10`, floored.
pub fn rmse_db(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return f64::NAN;
    }
    to_db(errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64)
}

/// Angle and distance RMSE over trials, with the per-trial squared errors kept for CDFs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseSummary {
    pub rmse_theta_db: f64,
    pub rmse_r_db: f64,
    pub sq_theta: Vec<f64>,
    pub sq_r: Vec<f64>,
}

/// Wrapped angle difference in `(−π, π]`.
pub fn angle_error(estimate: f64, truth: f64) -> f64 {
    let d = (estimate - truth).rem_euclid(std::f64::consts::TAU);
    if d > std::f64::consts::PI {
        d - std::f64::consts::TAU
    } else {
        d
    }
}

/// RMSE of polar `(θ, r)` estimates against the truth.
pub fn rmse(truth: &[(f64, f64)], estimates: &[(f64, f64)]) -> Result<RmseSummary> {
    if truth.is_empty() || truth.len() != estimates.len() {
        return Err(Error::InvalidArgument(format!(
            "RMSE needs matching non-empty lists, got {} and {}",
            truth.len(),
            estimates.len()
        )));
    }
    let d_theta: Vec<f64> = truth.iter().zip(estimates).map(|(t, e)| angle_error(e.0, t.0)).collect();
    let d_r: Vec<f64> = truth.iter().zip(estimates).map(|(t, e)| e.1 - t.1).collect();
    Ok(RmseSummary {
        rmse_theta_db: rmse_db(&d_theta),
        rmse_r_db: rmse_db(&d_r),
        sq_theta: d_theta.iter().map(|e| e * e).collect(),
        sq_r: d_r.iter().map(|e| e * e).collect(),
    })
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

//! Sparse recovery of the projected channel: AMP with EM hyper-parameter
//! learning, plus a joint-subcarrier OMP baseline.

mod amp;
mod omp;

pub use amp::{amp_em_estimate, bg_denoiser, AmpOptions, BernoulliGaussianPrior, DenoiserOutput};
pub use omp::omp_estimate;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelTensor, LinkDirection};
use crate::dictionary::PolarDictionary;
use crate::error::{Error, Result};
use crate::numerics::{gemm, matmul, CMatrix, Op};
use crate::pilot::PilotFrame;

/// Projected-domain estimate `Ĥ^P[m]` with learned statistics.
#[derive(Debug, Clone)]
pub struct SparseChannelEstimate {
    pub hp: Vec<CMatrix>,
    /// Learned (AMP) or residual (OMP) noise variance per subcarrier.
    pub noise_var: Vec<f64>,
    /// Common support probability per lattice column.
    pub support_prob: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl SparseChannelEstimate {
    pub fn m(&self) -> usize {
        self.hp.len()
    }

    pub fn n_columns(&self) -> usize {
        self.hp.first().map_or(0, |h| h.nrows())
    }

    /// Energy of lattice row `k` summed over UT antennas and subcarriers.
    pub fn row_energy(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.n_columns()];
        for h in &self.hp {
            for c in 0..h.ncols() {
                for (k, z) in h.column(c).iter().enumerate() {
                    e[k] += z.norm_sqr();
                }
            }
        }
        e
    }

    pub fn sidecar(&self) -> EstimateSidecar {
        EstimateSidecar {
            noise_var: self.noise_var.clone(),
            support_prob: self.support_prob.clone(),
            iterations: self.iterations,
            converged: self.converged,
        }
    }
}

/// Learned hyper-parameters exported next to an estimate dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateSidecar {
    pub noise_var: Vec<f64>,
    pub support_prob: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Effective sensing matrices `A[m] = W^H Φ[m]`.
pub fn sensing_matrices(frame: &PilotFrame, dictionary: &PolarDictionary) -> Vec<CMatrix> {
    (0..dictionary.m())
        .into_par_iter()
        .map(|m| gemm(&frame.w_ul, Op::H, &dictionary.phi(m), Op::N))
        .collect()
}

fn check_shapes(y: &[CMatrix], a: &[CMatrix]) -> Result<()> {
    if y.len() != a.len() || y.is_empty() {
        return Err(Error::Shape(format!(
            "{} measurement blocks for {} sensing matrices",
            y.len(),
            a.len()
        )));
    }
    for (ym, am) in y.iter().zip(a) {
        if ym.nrows() != am.nrows() {
            return Err(Error::Shape(format!(
                "measurement rows {} differ from sensing rows {}",
                ym.nrows(),
                am.nrows()
            )));
        }
    }
    Ok(())
}

/// `Ĥ[m] = Φ[m]·Ĥ^P[m]`.
pub fn reconstruct_spatial(estimate: &SparseChannelEstimate, dictionary: &PolarDictionary) -> Result<ChannelTensor> {
    if estimate.m() != dictionary.m() || estimate.n_columns() != dictionary.n_columns() {
        return Err(Error::Shape(format!(
            "estimate {}x{} does not match dictionary {}x{}",
            estimate.m(),
            estimate.n_columns(),
            dictionary.m(),
            dictionary.n_columns()
        )));
    }
    let mats = estimate
        .hp
        .par_iter()
        .enumerate()
        .map(|(m, h)| matmul(&dictionary.phi(m), h))
        .collect();
    ChannelTensor::new(LinkDirection::Uplink, mats)
}

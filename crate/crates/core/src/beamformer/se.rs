use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelTensor;
use crate::error::{Error, Result};
use crate::numerics::{matmul, matmul_h, CMatrix};

fn log2_det_pd(a: CMatrix, what: &str) -> Result<f64> {
    let chol = nalgebra::Cholesky::new(a).ok_or_else(|| Error::Domain(format!("{what} is not positive definite")))?;
    let l = chol.l_dirty();
    Ok((0..l.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum::<f64>() / std::f64::consts::LN_2)
}

/// `log₂ det(I + R_n⁻¹ Wᴴ H F Fᴴ Hᴴ W)` with `R_n = σ² Wᴴ W`.
pub fn subcarrier_se(h: &CMatrix, f: &CMatrix, w: &CMatrix, sigma2: f64) -> Result<f64> {
    if h.ncols() != f.nrows() || h.nrows() != w.nrows() {
        return Err(Error::Shape(format!(
            "H {}x{}, F {}x{}, W {}x{}",
            h.nrows(),
            h.ncols(),
            f.nrows(),
            f.ncols(),
            w.nrows(),
            w.ncols()
        )));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::Domain(format!("noise variance must be positive, got {sigma2}")));
    }
    let g = matmul_h(w, &matmul(h, f));
    let rn = matmul_h(w, w) * nalgebra::Complex::new(sigma2, 0.0);
    let total = &rn + matmul(&g, &g.adjoint());
    Ok((log2_det_pd(total, "signal-plus-noise covariance")? - log2_det_pd(rn, "noise covariance R_n")?).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeProfile {
    /// bits/s/Hz on each subcarrier.
    pub per_subcarrier: Vec<f64>,
}

impl SeProfile {
    pub fn mean(&self) -> f64 {
        self.per_subcarrier.iter().sum::<f64>() / self.per_subcarrier.len() as f64
    }

    /// `max − min` over subcarriers.
    pub fn spread(&self) -> f64 {
        let max = self.per_subcarrier.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.per_subcarrier.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }

    /// Mean of the first and last subcarrier.
    pub fn edge(&self) -> f64 {
        0.5 * (self.per_subcarrier[0] + self.per_subcarrier[self.per_subcarrier.len() - 1])
    }
}

/// Per-subcarrier SE of a downlink with precoders `F[m]` and combiners `W[m]`.
pub fn spectral_efficiency(
    h_dl: &ChannelTensor,
    precoders: &[CMatrix],
    combiners: &[CMatrix],
    sigma2: f64,
) -> Result<SeProfile> {
    let m = h_dl.m();
    if precoders.len() != m || combiners.len() != m {
        return Err(Error::Shape(format!(
            "{m} subcarriers with {} precoders and {} combiners",
            precoders.len(),
            combiners.len()
        )));
    }
    let per_subcarrier = (0..m)
        .into_par_iter()
        .map(|i| subcarrier_se(&h_dl.mats[i], &precoders[i], &combiners[i], sigma2))
        .collect::<Result<Vec<_>>>()?;
    Ok(SeProfile { per_subcarrier })
}

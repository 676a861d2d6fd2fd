use rayon::prelude::*;

use super::{check_shapes, SparseChannelEstimate};
use crate::error::{Error, Result};
use crate::numerics::{gemm, least_squares, CMatrix, Op};
use crate::pilot::MeasurementSet;

/// Simultaneous OMP with a support shared across UT antennas and subcarriers.
///
/// Atoms are scored by `Σ_m Σ_n |a_k[m]^H r_n[m]|² / ‖a_k[m]‖²`; ties go to
/// the lowest lattice index.
pub fn omp_estimate(measurements: &MeasurementSet, sensing: &[CMatrix], k: usize) -> Result<SparseChannelEstimate> {
    check_shapes(&measurements.y, sensing)?;
    let (p, n_ut) = measurements.y[0].shape();
    let k_total = sensing[0].ncols();
    if k == 0 || k > p || k > k_total {
        return Err(Error::InvalidArgument(format!(
            "OMP sparsity {k} must be in 1..={}",
            p.min(k_total)
        )));
    }
    let col_norms: Vec<Vec<f64>> = sensing
        .iter()
        .map(|a| a.column_iter().map(|c| c.norm_squared().max(f64::MIN_POSITIVE)).collect())
        .collect();

    let mut support: Vec<usize> = Vec::with_capacity(k);
    let mut residual: Vec<CMatrix> = measurements.y.clone();
    let mut coeffs: Vec<CMatrix> = Vec::new();
    for _ in 0..k {
        let scores: Vec<Vec<f64>> = sensing
            .par_iter()
            .zip(&residual)
            .zip(&col_norms)
            .map(|((a, r), norms)| {
                let corr = gemm(a, Op::H, r, Op::N);
                (0..k_total)
                    .map(|c| corr.row(c).norm_squared() / norms[c])
                    .collect()
            })
            .collect();
        let mut best = None;
        let mut best_score = f64::NEG_INFINITY;
        for c in 0..k_total {
            if support.contains(&c) {
                continue;
            }
            let s: f64 = scores.iter().map(|v| v[c]).sum();
            if s > best_score {
                best_score = s;
                best = Some(c);
            }
        }
        let Some(c) = best else { break };
        support.push(c);

        let fits: Vec<(CMatrix, CMatrix)> = sensing
            .par_iter()
            .zip(&measurements.y)
            .map(|(a, y)| {
                let sub = a.select_columns(&support);
                let (x, _) = least_squares(&sub, y)?;
                let r = y - &sub * &x;
                Ok((x, r))
            })
            .collect::<Result<_>>()?;
        (coeffs, residual) = fits.into_iter().unzip();
    }

    let hp = coeffs
        .iter()
        .map(|x| {
            let mut h = CMatrix::zeros(k_total, n_ut);
            for (i, &s) in support.iter().enumerate() {
                h.set_row(s, &x.row(i));
            }
            h
        })
        .collect();
    let noise_var = residual.iter().map(|r| r.norm_squared() / (p * n_ut) as f64).collect();
    let mut support_prob = vec![0.0; k_total];
    for &s in &support {
        support_prob[s] = 1.0;
    }
    Ok(SparseChannelEstimate {
        hp,
        noise_var,
        support_prob,
        iterations: support.len(),
        converged: true,
    })
}

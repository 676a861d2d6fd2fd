//! Simultaneous OMP selection of analog beams shared by all subcarriers.

use rayon::prelude::*;

use crate::channel::ChannelTensor;
use crate::error::{Error, Result};
use crate::numerics::{frobenius_sq, matmul, matmul_h, least_squares, svd, CMatrix};

/// `F_RF` drawn from a codebook plus per-subcarrier baseband matrices.
///
/// Also used for the UT combiner, where no power scaling is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridPrecoder {
    pub f_rf: CMatrix,
    pub f_bb: Vec<CMatrix>,
    /// Codebook column indices in selection order.
    pub selected: Vec<usize>,
    /// `Σ_m ‖T[m] − F_RF·F_BB[m]‖²_F` before power scaling.
    pub residual: f64,
    pub rank_deficient: bool,
}

impl HybridPrecoder {
    /// `F_RF·F_BB[m]` for every subcarrier.
    pub fn effective(&self) -> Vec<CMatrix> {
        self.f_bb.iter().map(|bb| matmul(&self.f_rf, bb)).collect()
    }
}

/// First `n_s` right singular vectors of each downlink matrix.
pub fn optimal_precoders(h_dl: &ChannelTensor, n_s: usize) -> Result<Vec<CMatrix>> {
    h_dl.mats
        .par_iter()
        .map(|h| {
            if n_s == 0 || n_s > h.nrows().min(h.ncols()) {
                return Err(Error::InvalidArgument(format!(
                    "{n_s} streams do not fit a {}x{} channel",
                    h.nrows(),
                    h.ncols()
                )));
            }
            Ok(svd(h)?.v.columns(0, n_s).into_owned())
        })
        .collect()
}

/// Greedy joint selection of `n_rf` codebook columns followed by per-subcarrier
/// least squares, without power scaling.
pub fn somp_select(targets: &[CMatrix], codebook: &CMatrix, n_rf: usize) -> Result<HybridPrecoder> {
    let k = codebook.ncols();
    if targets.is_empty() {
        return Err(Error::InvalidArgument("SOMP needs at least one subcarrier".into()));
    }
    if n_rf == 0 || n_rf > k {
        return Err(Error::InvalidArgument(format!("cannot select {n_rf} of {k} codebook columns")));
    }
    if let Some(t) = targets.iter().find(|t| t.nrows() != codebook.nrows() || t.ncols() != targets[0].ncols()) {
        return Err(Error::Shape(format!(
            "target {}x{} against codebook with {} rows",
            t.nrows(),
            t.ncols(),
            codebook.nrows()
        )));
    }
    let mut residual: Vec<CMatrix> = targets.to_vec();
    let mut selected: Vec<usize> = Vec::with_capacity(n_rf);
    let mut f_bb = Vec::new();
    let mut deficient = false;
    for _ in 0..n_rf {
        let mut score = vec![0.0; k];
        for r in &residual {
            let proj = matmul_h(codebook, r);
            for (c, s) in score.iter_mut().enumerate() {
                *s += proj.row(c).norm_squared();
            }
        }
        let mut best: Option<usize> = None;
        for c in (0..k).filter(|c| !selected.contains(c)) {
            if best.map_or(true, |b| score[c] > score[b]) {
                best = Some(c);
            }
        }
        selected.push(best.expect("n_rf <= k leaves a free column"));
        let f_rf = codebook.select_columns(&selected);
        f_bb.clear();
        deficient = false;
        for (t, r) in targets.iter().zip(residual.iter_mut()) {
            let (bb, def) = least_squares(&f_rf, t)?;
            deficient |= def;
            *r = t - matmul(&f_rf, &bb);
            f_bb.push(bb);
        }
    }
    Ok(HybridPrecoder {
        f_rf: codebook.select_columns(&selected),
        f_bb,
        selected,
        residual: residual.iter().map(frobenius_sq).sum(),
        rank_deficient: deficient,
    })
}

/// SOMP precoder scaled so that `‖F_RF·F_BB[m]‖²_F = power` on every subcarrier.
pub fn somp_hybrid(targets: &[CMatrix], codebook: &CMatrix, n_rf: usize, power: f64) -> Result<HybridPrecoder> {
    let mut p = somp_select(targets, codebook, n_rf)?;
    scale_to_power(&p.f_rf.clone(), &mut p.f_bb, power)?;
    Ok(p)
}

/// Rescales every `F_BB[m]` so the effective precoder meets `power` with equality.
pub fn scale_to_power(f_rf: &CMatrix, f_bb: &mut [CMatrix], power: f64) -> Result<()> {
    for (m, bb) in f_bb.iter_mut().enumerate() {
        let e = frobenius_sq(&matmul(f_rf, bb));
        if !(e > 0.0) {
            return Err(Error::Domain(format!("precoder vanishes on subcarrier {m}")));
        }
        *bb *= num_complex::Complex64::new((power / e).sqrt(), 0.0);
    }
    Ok(())
}

/// Fully digital MMSE combiners `W[m] = (H F Fᴴ Hᴴ + σ²I)⁻¹ H F`.
pub fn mmse_combiners(h_dl: &ChannelTensor, precoders: &[CMatrix], sigma2: f64) -> Result<Vec<CMatrix>> {
    if precoders.len() != h_dl.m() {
        return Err(Error::Shape(format!("{} precoders for {} subcarriers", precoders.len(), h_dl.m())));
    }
    h_dl.mats
        .par_iter()
        .zip(precoders.par_iter())
        .map(|(h, f)| {
            let hf = matmul(h, f);
            let mut cov = matmul(&hf, &hf.adjoint());
            for i in 0..cov.nrows() {
                cov[(i, i)] += sigma2;
            }
            let chol = nalgebra::Cholesky::new(cov)
                .ok_or_else(|| Error::Domain("received covariance is not positive definite".into()))?;
            Ok(chol.solve(&hf))
        })
        .collect()
}

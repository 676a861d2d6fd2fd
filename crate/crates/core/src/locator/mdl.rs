use crate::error::{Error, Result};
use crate::numerics::{gemm, hermitian_eig, CMatrix, Op};
use crate::pilot::MeasurementSet;

const EIG_FLOOR: f64 = 1e-10;

/// Forward spatial smoothing of an `N × N` covariance with window `N − k`.
pub fn smoothed_covariance(r: &CMatrix, k: usize) -> Result<CMatrix> {
    let n = r.nrows();
    if r.ncols() != n || k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("smoothing offset {k} invalid for {n}x{} covariance", r.ncols())));
    }
    let w = n - k;
    let mut out = CMatrix::zeros(w, w);
    for i in 0..=k {
        out += r.view((i, i), (w, w));
    }
    Ok(out.unscale((k + 1) as f64))
}

/// MDL objective for every candidate `L* ∈ 0..N−K`, eigenvalues sorted descending.
pub fn mdl_scores(eigenvalues: &[f64], n_ut: usize, k: usize, n_bs: usize) -> Vec<f64> {
    let p = eigenvalues.len();
    let top = eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    let floor = top * EIG_FLOOR;
    let lam: Vec<f64> = eigenvalues.iter().map(|&l| l.max(floor).max(f64::MIN_POSITIVE)).collect();
    let ln_bs = (n_bs as f64).ln();
    (0..p)
        .map(|l| {
            let tail = &lam[l..];
            let q = tail.len() as f64;
            let arith = tail.iter().sum::<f64>() / q;
            let geo = (tail.iter().map(|x| x.ln()).sum::<f64>() / q).exp();
            let fit = n_bs as f64 * q * (arith / geo).ln().max(0.0);
            let penalty = 0.5 * l as f64 * (2.0 * n_ut as f64 - l as f64 - k as f64) * ln_bs;
            fit + penalty
        })
        .collect()
}

/// Minimizer of [`mdl_scores`]; ties resolve to the smaller count.
pub fn mdl_order(eigenvalues: &[f64], n_ut: usize, k: usize, n_bs: usize) -> usize {
    let scores = mdl_scores(eigenvalues, n_ut, k, n_bs);
    let mut best = 0;
    for (l, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = l;
        }
    }
    best
}

/// Per-subcarrier MDL path count on the smoothed UT-side covariance, fused by mode.
pub fn estimate_num_mpc(measurements: &MeasurementSet, k_smooth: usize, n_bs: usize) -> Result<usize> {
    let mut votes = Vec::with_capacity(measurements.m());
    for y in &measurements.y {
        let n_ut = y.ncols();
        let r = gemm(y, Op::H, y, Op::N);
        if r.iter().all(|z| z.norm() == 0.0) {
            votes.push(0);
            continue;
        }
        let smooth = smoothed_covariance(&r, k_smooth)?;
        let eig = hermitian_eig(&smooth)?;
        votes.push(mdl_order(eig.eigenvalues.as_slice(), n_ut, k_smooth, n_bs));
    }
    Ok(mode(&votes))
}

fn mode(values: &[usize]) -> usize {
    let max = values.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; max + 1];
    for &v in values {
        counts[v] += 1;
    }
    let mut best = 0;
    for (v, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = v;
        }
    }
    best
}

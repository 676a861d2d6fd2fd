use num_complex::Complex64;
use rayon::prelude::*;

use super::{check_shapes, SparseChannelEstimate};
use crate::error::{Error, Result};
use crate::numerics::{gemm, real_gemm, CMatrix, Op, RMatrix};
use crate::pilot::MeasurementSet;
use crate::scenario::SystemConfig;

/// Bernoulli–Gaussian prior `(1−λ)δ(h) + λ·CN(μ, γ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernoulliGaussianPrior {
    pub lambda: f64,
    pub mu: Complex64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoiserOutput {
    pub mean: Complex64,
    pub var: f64,
    pub pi: f64,
    pub xi: Complex64,
    pub zeta: f64,
    pub llr: f64,
}

#[inline]
fn denoise(r: Complex64, sigma: f64, lambda: f64, mu: Complex64, gamma: f64) -> DenoiserOutput {
    let sg = sigma + gamma;
    let xi = (mu * sigma + r * gamma) / sg;
    let zeta = sigma * gamma / sg;
    let llr = 0.5 * (sigma / sg).ln() + r.norm_sqr() / (2.0 * sigma) - (r - mu).norm_sqr() / (2.0 * sg);
    let pi = if lambda <= 0.0 {
        0.0
    } else if lambda >= 1.0 {
        1.0
    } else {
        1.0 / (1.0 + (1.0 - lambda) / lambda * (-llr).exp())
    };
    let mean = xi * pi;
    let var = (pi * (xi.norm_sqr() + zeta) - mean.norm_sqr()).max(0.0);
    DenoiserOutput { mean, var, pi, xi, zeta, llr }
}

/// Posterior moments of `h` given the pseudo-observation `R = h + CN(0, Σ)`.
pub fn bg_denoiser(r: Complex64, sigma: f64, prior: BernoulliGaussianPrior) -> Result<DenoiserOutput> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("denoiser variance must be positive, got {sigma}")));
    }
    Ok(denoise(r, sigma, prior.lambda, prior.mu, prior.gamma))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmpOptions {
    pub t_iter: usize,
    pub damping: f64,
    /// Stop when the largest posterior-mean change is below `tol` times the largest entry.
    pub tol: f64,
    pub init_snr_db: f64,
}

impl AmpOptions {
    pub fn from_config(config: &SystemConfig) -> Self {
        Self {
            t_iter: config.t_iter,
            damping: config.damping,
            tol: config.amp_tol,
            init_snr_db: config.init_snr_db,
        }
    }
}

const NOISE_FLOOR: f64 = 1e-10;

struct Problem<'a> {
    a: &'a CMatrix,
    a2: RMatrix,
    y: CMatrix,
}

#[derive(Clone)]
struct State {
    h: CMatrix,
    v: RMatrix,
    big_v: RMatrix,
    z: CMatrix,
    sigma2: f64,
    mu: Vec<Complex64>,
    gamma: Vec<f64>,
    /// Σ_n π per lattice row, input to the shared λ.
    pi_sum: Vec<f64>,
    delta: f64,
    peak: f64,
}

fn finite(st: &State) -> bool {
    st.h.iter().all(|z| z.re.is_finite() && z.im.is_finite())
        && st.v.iter().all(|x| x.is_finite())
        && st.sigma2.is_finite()
}

/// One damped AMP sweep on subcarrier `m` followed by the per-subcarrier EM updates.
fn sweep(pb: &Problem<'_>, st: &State, lambda: &[f64], eps: f64) -> State {
    let (p, n_ut) = pb.y.shape();
    let k_total = pb.a.ncols();
    let s2 = st.sigma2;

    // factor nodes
    let v_new = real_gemm(&pb.a2, false, &st.v);
    let ah = gemm(pb.a, Op::N, &st.h, Op::N);
    let mut big_v = RMatrix::zeros(p, n_ut);
    let mut z = CMatrix::zeros(p, n_ut);
    for i in 0..p * n_ut {
        let onsager = v_new[i] / (s2 + st.big_v[i]) * (pb.y[i] - st.z[i]);
        let z_new = ah[i] - onsager;
        big_v[i] = eps * st.big_v[i] + (1.0 - eps) * v_new[i];
        z[i] = st.z[i] * eps + z_new * (1.0 - eps);
    }

    // variable nodes
    let inv = RMatrix::from_fn(p, n_ut, |i, j| 1.0 / (s2 + big_v[(i, j)]));
    let resid = CMatrix::from_fn(p, n_ut, |i, j| (pb.y[(i, j)] - z[(i, j)]) * inv[(i, j)]);
    let sigma_inv = real_gemm(&pb.a2, true, &inv);
    // A^H r = conj(A^T conj(r)) avoids a conjugated copy of A
    let back = gemm(pb.a, Op::T, &resid.conjugate(), Op::N);

    let mut h = CMatrix::zeros(k_total, n_ut);
    let mut v = RMatrix::zeros(k_total, n_ut);
    let mut pi_sum = vec![0.0; k_total];
    let mut mu = st.mu.clone();
    let mut gamma = st.gamma.clone();
    let mut delta: f64 = 0.0;
    let mut peak: f64 = 0.0;
    for c in 0..n_ut {
        let (mut s_pi, mut s_pixi, mut s_var) = (0.0, Complex64::new(0.0, 0.0), 0.0);
        for k in 0..k_total {
            let sigma = 1.0 / sigma_inv[(k, c)];
            let r = st.h[(k, c)] + back[(k, c)].conj() * sigma;
            let out = denoise(r, sigma, lambda[k], st.mu[c], st.gamma[c]);
            delta = delta.max((out.mean - st.h[(k, c)]).norm());
            peak = peak.max(out.mean.norm());
            h[(k, c)] = out.mean;
            v[(k, c)] = out.var;
            pi_sum[k] += out.pi;
            s_pi += out.pi;
            s_pixi += out.xi * out.pi;
            s_var += out.pi * ((st.mu[c] - out.xi).norm_sqr() + out.zeta);
        }
        if s_pi > 0.0 {
            mu[c] = s_pixi / s_pi;
            gamma[c] = (s_var / s_pi).max(f64::MIN_POSITIVE);
        }
    }

    let mut acc = 0.0;
    for i in 0..p * n_ut {
        let bv = big_v[i];
        acc += (pb.y[i] - z[i]).norm_sqr() / (1.0 + bv / s2).powi(2) + s2 * bv / (s2 + bv);
    }
    let sigma2 = (acc / (p * n_ut) as f64).max(NOISE_FLOOR);

    State {
        h,
        v,
        big_v,
        z,
        sigma2,
        mu,
        gamma,
        pi_sum,
        delta,
        peak,
    }
}

/// Damped AMP over all subcarriers with EM learning of `(λ, μ, γ, σ²)`.
///
/// `sensing[m]` is `A[m] = W^H Φ[m]`. Measurements are scaled to unit mean
/// power internally and the estimate is scaled back on return.
pub fn amp_em_estimate(
    measurements: &MeasurementSet,
    sensing: &[CMatrix],
    opts: &AmpOptions,
) -> Result<SparseChannelEstimate> {
    check_shapes(&measurements.y, sensing)?;
    if opts.t_iter < 1 || !(0.0..1.0).contains(&opts.damping) {
        return Err(Error::InvalidArgument(format!(
            "need t_iter >= 1 and damping in [0, 1), got {} / {}",
            opts.t_iter, opts.damping
        )));
    }
    let m_total = sensing.len();
    let (p, n_ut) = measurements.y[0].shape();
    let k_total = sensing[0].ncols();
    let entries = (m_total * p * n_ut) as f64;
    let power = measurements.y.iter().map(|y| y.norm_squared()).sum::<f64>() / entries;
    if power == 0.0 {
        return Ok(SparseChannelEstimate {
            hp: vec![CMatrix::zeros(k_total, n_ut); m_total],
            noise_var: vec![0.0; m_total],
            support_prob: vec![0.0; k_total],
            iterations: 0,
            converged: true,
        });
    }
    let scale = power.sqrt();

    let problems: Vec<Problem<'_>> = sensing
        .par_iter()
        .zip(&measurements.y)
        .map(|(a, y)| Problem {
            a,
            a2: a.map(|z| z.norm_sqr()),
            y: y.unscale(scale),
        })
        .collect();

    let lambda0 = (p as f64 / k_total as f64 * 0.1).min(1.0);
    let snr0 = 10f64.powf(opts.init_snr_db / 10.0);
    let mut states: Vec<State> = problems
        .iter()
        .map(|pb| {
            let y2 = pb.y.norm_squared();
            let sigma2 = (y2 / ((snr0 + 1.0) * (p * n_ut) as f64)).max(NOISE_FLOOR);
            let a_fro = pb.a2.sum();
            let gamma0 = ((y2 - (p * n_ut) as f64 * sigma2) / (n_ut as f64 * a_fro * lambda0)).max(f64::MIN_POSITIVE);
            State {
                h: CMatrix::zeros(k_total, n_ut),
                v: RMatrix::from_element(k_total, n_ut, gamma0),
                big_v: RMatrix::from_element(p, n_ut, 1.0),
                z: pb.y.clone(),
                sigma2,
                mu: vec![Complex64::new(0.0, 0.0); n_ut],
                gamma: vec![gamma0; n_ut],
                pi_sum: vec![0.0; k_total],
                delta: f64::INFINITY,
                peak: 0.0,
            }
        })
        .collect();
    let mut lambda = vec![lambda0; k_total];

    let finish = |states: &[State], lambda: &[f64], iterations: usize, converged: bool| SparseChannelEstimate {
        hp: states.iter().map(|s| s.h.scale(scale)).collect(),
        noise_var: states.iter().map(|s| s.sigma2 * power).collect(),
        support_prob: lambda.to_vec(),
        iterations,
        converged,
    };

    for t in 1..=opts.t_iter {
        let next: Vec<State> = problems
            .par_iter()
            .zip(states.par_iter())
            .map(|(pb, st)| sweep(pb, st, &lambda, opts.damping))
            .collect();
        if !next.iter().all(finite) {
            return Err(Error::Diverged {
                iteration: t,
                last: Box::new(finish(&states, &lambda, t - 1, false)),
            });
        }
        states = next;
        let norm = (m_total * n_ut) as f64;
        for (k, l) in lambda.iter_mut().enumerate() {
            *l = states.iter().map(|s| s.pi_sum[k]).sum::<f64>() / norm;
        }
        let delta = states.iter().map(|s| s.delta).fold(0.0, f64::max);
        let peak = states.iter().map(|s| s.peak).fold(0.0, f64::max);
        if delta <= opts.tol * peak.max(f64::MIN_POSITIVE) {
            return Ok(finish(&states, &lambda, t, true));
        }
    }
    Ok(finish(&states, &lambda, opts.t_iter, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{complex_normal, least_squares, rng_for};
    use approx::assert_abs_diff_eq;
    use rand::seq::index::sample;

    #[test]
    fn denoiser_reference_values() {
        let prior = BernoulliGaussianPrior {
            lambda: 0.5,
            mu: Complex64::new(0.0, 0.0),
            gamma: 1.0,
        };
        let out = bg_denoiser(Complex64::new(2.0, 0.0), 1.0, prior).unwrap();
        assert_abs_diff_eq!(out.llr, 0.65343, epsilon = 1e-5);
        assert_abs_diff_eq!(out.pi, 0.657782, epsilon = 1e-6);
        assert_abs_diff_eq!(out.mean.re, 0.657782, epsilon = 1e-6);
        assert_abs_diff_eq!(out.var, 0.553996, epsilon = 1e-6);
    }

    #[test]
    fn denoiser_limits() {
        let r = Complex64::new(0.3, -1.2);
        let off = bg_denoiser(r, 0.5, BernoulliGaussianPrior { lambda: 0.0, mu: r, gamma: 2.0 }).unwrap();
        assert_eq!(off.mean, Complex64::new(0.0, 0.0));
        assert_eq!(off.var, 0.0);
        let on = bg_denoiser(r, 0.5, BernoulliGaussianPrior { lambda: 1.0, mu: Complex64::new(0.1, 0.0), gamma: 2.0 })
            .unwrap();
        assert!((on.mean - on.xi).norm() < 1e-15);
        assert_abs_diff_eq!(on.var, on.zeta, epsilon = 1e-12);
        assert!(bg_denoiser(r, 0.0, BernoulliGaussianPrior { lambda: 0.5, mu: r, gamma: 1.0 }).is_err());
    }

    #[test]
    fn denoiser_is_monotone_in_lambda() {
        let r = Complex64::new(0.8, 0.4);
        let mut last = 0.0;
        for i in 0..=20 {
            let lambda = i as f64 / 20.0;
            let out = denoise(r, 0.7, lambda, Complex64::new(0.0, 0.0), 1.3);
            assert!(out.mean.norm() >= last - 1e-15);
            last = out.mean.norm();
        }
    }

    fn synthetic(seed: u64, p: usize, k: usize, n: usize, m: usize, nnz: usize) -> (Vec<CMatrix>, Vec<CMatrix>, Vec<CMatrix>, Vec<usize>) {
        let mut rng = rng_for(seed, &[]);
        let support: Vec<usize> = sample(&mut rng, k, nnz).into_vec();
        let a: Vec<CMatrix> = (0..m)
            .map(|_| CMatrix::from_fn(p, k, |_, _| complex_normal(&mut rng, 1.0 / p as f64)))
            .collect();
        let x: Vec<CMatrix> = (0..m)
            .map(|_| {
                let mut x = CMatrix::zeros(k, n);
                for &s in &support {
                    for c in 0..n {
                        x[(s, c)] = complex_normal(&mut rng, 1.0);
                    }
                }
                x
            })
            .collect();
        let y = a.iter().zip(&x).map(|(a, x)| a * x).collect();
        (a, x, y, support)
    }

    fn opts() -> AmpOptions {
        AmpOptions {
            t_iter: 300,
            damping: 0.3,
            tol: 1e-9,
            init_snr_db: 10.0,
        }
    }

    #[test]
    fn noiseless_sparse_recovery_matches_oracle() {
        let (a, x, y, support) = synthetic(1, 32, 128, 4, 2, 8);
        let meas = MeasurementSet { y: y.clone(), noise_var: 0.0, snr_db: f64::INFINITY };
        let est = amp_em_estimate(&meas, &a, &opts()).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for m in 0..2 {
            let sub = a[m].select_columns(&support);
            let (ls, _) = least_squares(&sub, &y[m]).unwrap();
            let mut oracle = CMatrix::zeros(128, 4);
            for (i, &s) in support.iter().enumerate() {
                oracle.set_row(s, &ls.row(i));
            }
            num += (&est.hp[m] - &oracle).norm_squared();
            den += oracle.norm_squared();
            assert!((&oracle - &x[m]).norm() < 1e-9);
        }
        let nmse = 10.0 * (num / den).log10();
        assert!(nmse < -40.0, "nmse {nmse} dB after {} iterations", est.iterations);
    }

    #[test]
    fn zero_measurements_give_zero_estimate() {
        let (a, _, y, _) = synthetic(2, 16, 40, 2, 2, 3);
        let zero = MeasurementSet {
            y: y.iter().map(|m| CMatrix::zeros(m.nrows(), m.ncols())).collect(),
            noise_var: 0.0,
            snr_db: 0.0,
        };
        let est = amp_em_estimate(&zero, &a, &opts()).unwrap();
        assert!(est.hp.iter().all(|h| h.norm() == 0.0));
    }

    #[test]
    fn shared_lambda_stays_within_posterior_range() {
        let (a, _, y, _) = synthetic(3, 24, 80, 3, 2, 4);
        let meas = MeasurementSet { y, noise_var: 0.0, snr_db: f64::INFINITY };
        let mut o = opts();
        o.t_iter = 5;
        let est = amp_em_estimate(&meas, &a, &o).unwrap();
        assert!(est.support_prob.iter().all(|&l| (0.0..=1.0).contains(&l)));
    }

    #[test]
    fn rejects_shape_mismatch() {
        let (a, _, y, _) = synthetic(4, 16, 40, 2, 2, 3);
        let meas = MeasurementSet { y: y[..1].to_vec(), noise_var: 0.0, snr_db: 0.0 };
        assert!(matches!(amp_em_estimate(&meas, &a, &opts()), Err(Error::Shape(_))));
    }
}

//! Uplink training frame, random analog combining and measurement synthesis.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::channel::{ChannelTensor, LinkDirection};
use crate::error::{Error, Result};
use crate::numerics::{complex_normal, gemm, matmul, rng_for, CMatrix, Op};
use crate::scenario::{dbm_to_watt, SystemConfig};

/// Stream tags for [`rng_for`].
const TAG_COMBINER: u64 = 1;
const TAG_SYMBOLS: u64 = 2;
const TAG_NOISE: u64 = 3;

#[derive(Debug, Clone)]
pub struct PilotFrame {
    /// Stacked analog combiners `[W_1, …, W_Q]`, `N_BS × P`.
    pub w_ul: CMatrix,
    /// Unnormalized DFT pilot matrix, `F^H F = N_UT·I`.
    pub f_ul: CMatrix,
    /// Unit-modulus symbols indexed `[m][q][n]`.
    pub symbols: Vec<Vec<Vec<Complex64>>>,
    pub q_bs: usize,
    pub n_rf: usize,
}

impl PilotFrame {
    pub fn n_meas(&self) -> usize {
        self.w_ul.ncols()
    }

    /// Combiner of subframe `q` (0-based).
    pub fn combiner(&self, q: usize) -> CMatrix {
        self.w_ul.columns(q * self.n_rf, self.n_rf).into_owned()
    }
}

pub fn dft_matrix(n: usize) -> CMatrix {
    let w = -2.0 * std::f64::consts::PI / n as f64;
    CMatrix::from_fn(n, n, |i, k| Complex64::from_polar(1.0, w * (i * k) as f64))
}

fn random_phase<R: Rng + ?Sized>(rng: &mut R, modulus: f64) -> Complex64 {
    Complex64::from_polar(modulus, rng.random_range(0.0..std::f64::consts::TAU))
}

pub fn build_pilot_frame(config: &SystemConfig, seed: u64) -> PilotFrame {
    let (n_bs, n_ut, q_bs, n_rf) = (config.n_bs, config.n_ut, config.q_bs, config.n_rf_bs);
    let modulus = 1.0 / (n_bs as f64).sqrt();
    let mut rng = rng_for(seed, &[TAG_COMBINER]);
    let w_ul = CMatrix::from_fn(n_bs, q_bs * n_rf, |_, _| random_phase(&mut rng, modulus));
    let mut rng = rng_for(seed, &[TAG_SYMBOLS]);
    let symbols = (0..config.m_subcarriers)
        .map(|_| {
            (0..q_bs)
                .map(|_| (0..n_ut).map(|_| random_phase(&mut rng, 1.0)).collect())
                .collect()
        })
        .collect();
    PilotFrame {
        w_ul,
        f_ul: dft_matrix(n_ut),
        symbols,
        q_bs,
        n_rf,
    }
}

/// Post-processed uplink measurements `Y[m] = W^H H[m] + N[m]`.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    pub y: Vec<CMatrix>,
    /// Effective noise variance per entry.
    pub noise_var: f64,
    /// Design SNR: mean noiseless entry power over `noise_var`, dB.
    pub snr_db: f64,
}

impl MeasurementSet {
    pub fn m(&self) -> usize {
        self.y.len()
    }
}

/// How the effective noise level is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLevel {
    /// Average per-entry SNR target in dB; `INFINITY` means noiseless.
    TargetSnrDb(f64),
    /// Transmit power in dBm against the configured thermal noise.
    TransmitPowerDbm(f64),
}

impl NoiseLevel {
    pub fn from_config(config: &SystemConfig) -> Self {
        match config.p_t_ul_dbm {
            Some(p) => NoiseLevel::TransmitPowerDbm(p),
            None => NoiseLevel::TargetSnrDb(config.snr_db),
        }
    }
}

pub fn simulate_uplink(
    channel: &ChannelTensor,
    frame: &PilotFrame,
    config: &SystemConfig,
    seed: u64,
) -> Result<MeasurementSet> {
    simulate_uplink_with(channel, frame, NoiseLevel::from_config(config), config, seed)
}

pub fn simulate_uplink_with(
    channel: &ChannelTensor,
    frame: &PilotFrame,
    level: NoiseLevel,
    config: &SystemConfig,
    seed: u64,
) -> Result<MeasurementSet> {
    if channel.direction != LinkDirection::Uplink {
        return Err(Error::InvalidArgument("uplink simulation needs an uplink channel".into()));
    }
    let n_bs = frame.w_ul.nrows();
    if channel.mats.iter().any(|h| h.nrows() != n_bs) {
        return Err(Error::Shape(format!("channel rows differ from combiner rows {n_bs}")));
    }
    if frame.symbols.len() < channel.m() {
        return Err(Error::Shape("pilot frame has fewer subcarriers than the channel".into()));
    }
    let clean: Vec<CMatrix> = channel
        .mats
        .par_iter()
        .map(|h| gemm(&frame.w_ul, Op::H, h, Op::N))
        .collect();
    let entries: usize = clean.iter().map(|y| y.len()).sum();
    let signal = clean.iter().map(|y| y.norm_squared()).sum::<f64>() / entries.max(1) as f64;
    let noise_var = match level {
        NoiseLevel::TargetSnrDb(snr) if snr.is_infinite() && snr > 0.0 => 0.0,
        NoiseLevel::TargetSnrDb(snr) => signal / 10f64.powf(snr / 10.0),
        NoiseLevel::TransmitPowerDbm(p) => {
            config.noise_power() * config.m_subcarriers as f64 / dbm_to_watt(p)
        }
    };
    let snr_db = 10.0 * (signal / noise_var).log10();
    if noise_var == 0.0 {
        return Ok(MeasurementSet { y: clean, noise_var, snr_db });
    }

    let n_ut = frame.f_ul.ncols();
    let scale = 1.0 / (n_ut as f64).sqrt();
    let y = clean
        .into_par_iter()
        .enumerate()
        .map(|(m, mut ym)| {
            let mut rng = rng_for(seed, &[TAG_NOISE, m as u64]);
            for q in 0..frame.q_bs {
                // despreading with the unitary (D_q F)^{-1}·√N_UT keeps W_q^H Ñ_q white
                let despread = CMatrix::from_fn(n_ut, n_ut, |i, k| {
                    frame.f_ul[(k, i)].conj() * frame.symbols[m][q][k].conj() * scale
                });
                let raw = CMatrix::from_fn(n_bs, n_ut, |_, _| complex_normal(&mut rng, noise_var));
                let wq = frame.combiner(q);
                let nq = matmul(&gemm(&wq, Op::H, &raw, Op::N), &despread);
                let mut block = ym.rows_mut(q * frame.n_rf, frame.n_rf);
                block += nq;
            }
            ym
        })
        .collect();
    Ok(MeasurementSet { y, noise_var, snr_db })
}

//! Exact spherical-wavefront wideband channels.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{CMatrix, CVector};
use crate::scenario::{delta, ScenarioGeometry, SystemConfig};

/// Distance offset `r_n − r` from the array reference to element `δ`, in a
/// cancellation-free form. Returns the far-field limit when `r` is infinite.
pub fn element_offset(theta: f64, r: f64, delta_d: f64) -> f64 {
    let s = theta.sin();
    if r.is_infinite() {
        return -delta_d * s;
    }
    let rn = (r * r + delta_d * delta_d - 2.0 * r * delta_d * s).max(0.0).sqrt();
    (delta_d * delta_d - 2.0 * r * delta_d * s) / (rn + r)
}

/// Unit-norm array manifold `(1/√N)·exp(−j2π/λ·(r_n − r))`.
///
/// `r = f64::INFINITY` selects the planar-wave manifold.
pub fn steering_vector(theta: f64, r: f64, lambda: f64, n_ant: usize, d: f64) -> Result<CVector> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("steering distance must be positive, got {r}")));
    }
    if n_ant == 0 {
        return Err(Error::InvalidArgument("steering vector needs at least one element".into()));
    }
    let scale = 1.0 / (n_ant as f64).sqrt();
    let k = 2.0 * std::f64::consts::PI / lambda;
    Ok(CVector::from_iterator(
        n_ant,
        (1..=n_ant).map(|n| {
            let off = element_offset(theta, r, delta(n, n_ant) * d);
            Complex64::from_polar(scale, -k * off)
        }),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkDirection {
    Uplink,
    Downlink,
}

/// Per-subcarrier channel matrices; uplink is `N_BS × N_UT`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    pub direction: LinkDirection,
    pub mats: Vec<CMatrix>,
}

impl ChannelTensor {
    pub fn new(direction: LinkDirection, mats: Vec<CMatrix>) -> Result<Self> {
        if let Some(first) = mats.first() {
            if mats.iter().any(|h| h.shape() != first.shape()) {
                return Err(Error::Shape("subcarrier matrices differ in shape".into()));
            }
        }
        Ok(Self { direction, mats })
    }

    pub fn m(&self) -> usize {
        self.mats.len()
    }

    /// TDD reciprocity: the downlink matrix is the uplink conjugate transpose.
    pub fn reciprocal(&self) -> Self {
        Self {
            direction: match self.direction {
                LinkDirection::Uplink => LinkDirection::Downlink,
                LinkDirection::Downlink => LinkDirection::Uplink,
            },
            mats: self.mats.iter().map(|h| h.adjoint()).collect(),
        }
    }

    pub fn energy(&self) -> f64 {
        self.mats.iter().map(|h| h.norm_squared()).sum()
    }

    /// Writes `m,row,col,re,im` records (0-based indices).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_matrices_csv(&self.mats, out)
    }

    pub fn read_csv<R: BufRead>(input: R, direction: LinkDirection) -> Result<Self> {
        Self::new(direction, read_matrices_csv(input)?)
    }
}

pub fn write_matrices_csv<W: Write>(mats: &[CMatrix], mut out: W) -> Result<()> {
    writeln!(out, "m,row,col,re,im")?;
    for (m, h) in mats.iter().enumerate() {
        for c in 0..h.ncols() {
            for r in 0..h.nrows() {
                let z = h[(r, c)];
                writeln!(out, "{m},{r},{c},{:e},{:e}", z.re, z.im)?;
            }
        }
    }
    Ok(())
}

pub fn read_matrices_csv<R: BufRead>(input: R) -> Result<Vec<CMatrix>> {
    let mut entries = Vec::new();
    let (mut mm, mut rr, mut cc) = (0usize, 0usize, 0usize);
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::Shape(format!("dump line {} has {} fields", i + 1, f.len())));
        }
        let bad = |e: String| Error::Shape(format!("dump line {}: {e}", i + 1));
        let idx = |s: &str| s.trim().parse::<usize>().map_err(|e| bad(e.to_string()));
        let val = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(e.to_string()));
        let (m, r, c) = (idx(f[0])?, idx(f[1])?, idx(f[2])?);
        mm = mm.max(m + 1);
        rr = rr.max(r + 1);
        cc = cc.max(c + 1);
        entries.push((m, r, c, Complex64::new(val(f[3])?, val(f[4])?)));
    }
    if entries.len() != mm * rr * cc {
        return Err(Error::Shape(format!(
            "dump holds {} entries, expected {mm}x{rr}x{cc}",
            entries.len()
        )));
    }
    let mut mats = vec![CMatrix::zeros(rr, cc); mm];
    for (m, r, c, z) in entries {
        mats[m][(r, c)] = z;
    }
    Ok(mats)
}

/// Uplink channel `H[m] = H_LoS[m] + Σ_l g_l·a_BS(θ_l, r_l)·a_UT(θ_l^UT, r_l^UT)^T`.
///
/// The LoS part is evaluated from exact antenna-pair distances. The UT-side
/// manifold enters transposed so that every path's phase is the sum of its
/// BS-side and UT-side path lengths, the same convention as the LoS term.
pub fn build_channel(scenario: &ScenarioGeometry, config: &SystemConfig) -> Result<ChannelTensor> {
    if scenario.los.is_none() && scenario.scatterers.is_empty() {
        return Err(Error::Scenario("channel needs LoS or at least one scatterer".into()));
    }
    let d = config.spacing();
    let (n_bs, n_ut) = (config.n_bs, config.n_ut);
    let n_nlos = scenario.scatterers.len().max(1) as f64;
    let two_pi = 2.0 * std::f64::consts::PI;

    let bs_pos: Vec<f64> = (1..=n_bs).map(|n| delta(n, n_bs) * d).collect();
    let ut_pos: Vec<(f64, f64)> = (1..=n_ut).map(|n| scenario.ut.antenna(n, n_ut, d)).collect();

    let mats = config
        .wavelengths()
        .into_par_iter()
        .map(|lambda| -> Result<CMatrix> {
            let k = two_pi / lambda;
            let mut h = CMatrix::zeros(n_bs, n_ut);
            if let Some(los) = &scenario.los {
                let amp = los.beta.sqrt();
                for (c, &(ux, uy)) in ut_pos.iter().enumerate() {
                    for (r, &by) in bs_pos.iter().enumerate() {
                        let dist = ux.hypot(uy - by);
                        h[(r, c)] = Complex64::from_polar(amp, -k * dist);
                    }
                }
            }
            for sc in &scenario.scatterers {
                let gain = (sc.beta * (n_bs * n_ut) as f64 / n_nlos).sqrt()
                    * sc.alpha
                    * Complex64::from_polar(1.0, -k * (sc.ut.r + sc.bs.r));
                let a_bs = steering_vector(sc.bs.theta, sc.bs.r, lambda, n_bs, d)?;
                let a_ut = steering_vector(sc.ut.theta, sc.ut.r, lambda, n_ut, d)?;
                for c in 0..n_ut {
                    let w = gain * a_ut[c];
                    for r in 0..n_bs {
                        h[(r, c)] += a_bs[r] * w;
                    }
                }
            }
            Ok(h)
        })
        .collect::<Result<Vec<_>>>()?;
    ChannelTensor::new(LinkDirection::Uplink, mats)
}

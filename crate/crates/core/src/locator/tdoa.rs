use std::f64::consts::TAU;

use super::{VaClass, VaRecord};
use crate::error::{Error, Result};
use crate::estimator::SparseChannelEstimate;
use crate::numerics::C64;

/// Delay oversampling relative to `1/BW`.
pub const DELAY_OVERSAMPLING: usize = 10;

/// Delay search grid over one ambiguity period `1/Δf = M/BW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayGrid {
    pub period: f64,
    pub points: usize,
}

impl DelayGrid {
    pub fn for_frequencies(freqs: &[f64]) -> Result<Self> {
        if freqs.len() < 2 {
            return Err(Error::InvalidArgument("delay estimation needs at least two subcarriers".into()));
        }
        let df = freqs[1] - freqs[0];
        let uniform = freqs.windows(2).all(|w| ((w[1] - w[0]) - df).abs() <= 1e-9 * df.abs());
        if !(df > 0.0) || !uniform {
            return Err(Error::InvalidArgument("subcarrier frequencies must be uniform and increasing".into()));
        }
        Ok(Self { period: 1.0 / df, points: DELAY_OVERSAMPLING * freqs.len() })
    }

    pub fn step(&self) -> f64 {
        self.period / self.points as f64
    }

    pub fn wrap(&self, tau: f64) -> f64 {
        wrap_delay(tau, self.period)
    }
}

/// Maps a delay into `[−T/2, T/2)`.
pub fn wrap_delay(tau: f64, period: f64) -> f64 {
    (tau + 0.5 * period).rem_euclid(period) - 0.5 * period
}

/// The representative of `wrapped + k·T` closest to `reference`.
pub fn unwrap_delay(wrapped: f64, reference: f64, period: f64) -> f64 {
    wrapped + period * ((reference - wrapped) / period).round()
}

/// Matched-filter delay of one frequency response, in `[0, T)`.
pub fn matched_delay(response: &[C64], freqs: &[f64], grid: &DelayGrid) -> f64 {
    let f0 = freqs[0];
    let power = |tau: f64| {
        response
            .iter()
            .zip(freqs)
            .map(|(h, f)| h * C64::from_polar(1.0, TAU * tau * (f - f0)))
            .sum::<C64>()
            .norm_sqr()
    };
    let step = grid.step();
    let values: Vec<f64> = (0..grid.points).map(|i| power(i as f64 * step)).collect();
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    let n = grid.points;
    let (l, c, r) = (values[(best + n - 1) % n], values[best], values[(best + 1) % n]);
    let den = l - 2.0 * c + r;
    let offset = if den < 0.0 { (0.5 * (l - r) / den).clamp(-0.5, 0.5) } else { 0.0 };
    ((best as f64 + offset) * step).rem_euclid(grid.period)
}

/// Circular mean of delays on a ring of circumference `period`.
pub fn circular_mean(delays: &[f64], period: f64) -> f64 {
    let s: C64 = delays.iter().map(|t| C64::from_polar(1.0, TAU * t / period)).sum();
    (s.arg() / TAU * period).rem_euclid(period)
}

/// Relative delay of lattice row `index`, averaged over UT antennas.
pub fn path_delay(estimate: &SparseChannelEstimate, index: usize, freqs: &[f64], grid: &DelayGrid) -> f64 {
    let n_ut = estimate.hp.first().map_or(0, |h| h.ncols());
    let per_antenna: Vec<f64> = (0..n_ut)
        .map(|n| {
            let response: Vec<C64> = estimate.hp.iter().map(|h| h[(index, n)]).collect();
            matched_delay(&response, freqs, grid)
        })
        .collect();
    circular_mean(&per_antenna, grid.period)
}

/// Fills `tdoa` for every scatterer VA: its delay minus the mean subarray-center
/// delay, wrapped to `[−T/2, T/2)`. Returns the grid so callers can unwrap.
pub fn tdoa_measure(estimate: &SparseChannelEstimate, vas: &mut [VaRecord], freqs: &[f64]) -> Result<DelayGrid> {
    if freqs.len() != estimate.m() {
        return Err(Error::Shape(format!("{} frequencies for {} subcarriers", freqs.len(), estimate.m())));
    }
    let grid = DelayGrid::for_frequencies(freqs)?;
    let delays: Vec<f64> = vas.iter().map(|v| path_delay(estimate, v.index, freqs, &grid)).collect();
    let reference: Vec<f64> = vas
        .iter()
        .zip(&delays)
        .filter(|(v, _)| v.class == VaClass::SubarrayCenter)
        .map(|(_, &d)| d)
        .collect();
    if reference.is_empty() {
        return Ok(grid);
    }
    let tau0 = circular_mean(&reference, grid.period);
    for (va, &d) in vas.iter_mut().zip(&delays) {
        if va.class == VaClass::Scatterer {
            va.tdoa = Some(grid.wrap(d - tau0));
        }
    }
    Ok(grid)
}

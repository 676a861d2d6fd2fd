//! Subarray-aggregated broadened beams that cover the whole pre-squint span.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::squint::SquintTarget;
use crate::channel::element_offset;
use crate::error::{Error, Result};
use crate::numerics::CVector;
use crate::scenario::{delta, SystemConfig};

/// Beam shape used for a codebook column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeamStyle {
    /// Subarray beam spread in angle and inverse distance.
    Broadened,
    /// Single near-field focus at the carrier.
    Focused,
    /// Subarray beam spread in angle only, planar wavefront.
    FarFieldBroadened,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BroadenedBeam {
    pub vector: CVector,
    pub g: usize,
    pub n_sub: usize,
    /// `false` when no divisor met both width conditions and `G = N` was used.
    pub feasible: bool,
}

/// Array geometry and band needed to synthesize a beam.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamGeometry {
    pub n: usize,
    pub d: f64,
    pub lambda_c: f64,
    pub wavelengths: Vec<f64>,
}

impl BeamGeometry {
    pub fn bs(config: &SystemConfig) -> Self {
        Self {
            n: config.n_bs,
            d: config.spacing(),
            lambda_c: config.wavelength_c(),
            wavelengths: config.wavelengths(),
        }
    }

    pub fn ut(config: &SystemConfig) -> Self {
        Self {
            n: config.n_ut,
            ..Self::bs(config)
        }
    }
}

/// Phase-only beam whose `G = focal.len()` equal subarrays each focus on
/// their own `(sinθ_g, 1/r_g)`; `1/r_g ≤ 0` uses the second-order phase.
pub fn subarray_beam(n: usize, d: f64, lambda_c: f64, focal: &[(f64, f64)]) -> Result<CVector> {
    let g = focal.len();
    if g == 0 || n == 0 || n % g != 0 {
        return Err(Error::InvalidArgument(format!("{g} subarrays do not tile {n} elements")));
    }
    let n_sub = n / g;
    let k = 2.0 * std::f64::consts::PI / lambda_c;
    let scale = 1.0 / (n as f64).sqrt();
    Ok(CVector::from_iterator(
        n,
        (0..n).map(|i| {
            let (s, inv_r) = focal[i / n_sub];
            let s = s.clamp(-1.0, 1.0);
            let dd = delta(i + 1, n) * d;
            let off = if inv_r > 0.0 {
                element_offset(s.asin(), 1.0 / inv_r, dd)
            } else {
                -dd * s + dd * dd * (1.0 - s * s) * inv_r / 2.0
            };
            Complex64::from_polar(scale, -k * off)
        }),
    ))
}

fn divisors(n: usize) -> impl Iterator<Item = usize> {
    (1..=n).filter(move |g| n % g == 0)
}

/// Subarray count for a span: the smallest divisor `G` of `n` whose
/// `N_sub = n/G` element lobes cover `Δsinθ` and, if `inv_width_scale` is
/// given, `Δ(1/r)` with width `1.556/(N_sub²·λ_c·cos²θ₀)`.
pub fn subarray_count(n: usize, span_sin: f64, span_inv_r: Option<(f64, f64)>) -> (usize, bool) {
    let found = divisors(n).find(|&g| {
        let n_sub = (n / g) as f64;
        let angle_ok = g as f64 / n_sub >= span_sin;
        let range_ok = match span_inv_r {
            Some((span, width_unit)) => 1.556 * g as f64 * width_unit / (n_sub * n_sub) >= span,
            None => true,
        };
        angle_ok && range_ok
    });
    match found {
        Some(g) => (g, true),
        None => (n, false),
    }
}

/// Broadened near-field column for a target at `(r₀, θ₀)`.
pub fn broadened_beam(r0: f64, theta0: f64, geom: &BeamGeometry) -> Result<BroadenedBeam> {
    let target = SquintTarget::new(r0, theta0, &geom.wavelengths, geom.lambda_c)?;
    let cos2 = theta0.cos().powi(2);
    if cos2 <= 0.0 {
        return Err(Error::OutOfVisibleRegion { m: 0 });
    }
    let width_unit = 1.0 / (geom.lambda_c * cos2);
    let (g, feasible) = subarray_count(geom.n, target.span_sin, Some((target.span_inv_r, width_unit)));
    let n_sub = geom.n / g;
    let (c_sin, c_inv) = target.span_center();
    let (dir_s, dir_r) = target.span_direction();
    let focal: Vec<(f64, f64)> = (1..=g)
        .map(|gi| {
            let k = (2 * gi) as f64 - 1.0 - g as f64;
            let ns = n_sub as f64;
            (
                c_sin + dir_s * k / (2.0 * ns),
                c_inv + dir_r * 0.778 * k * width_unit / (ns * ns),
            )
        })
        .collect();
    Ok(BroadenedBeam {
        vector: subarray_beam(geom.n, geom.d, geom.lambda_c, &focal)?,
        g,
        n_sub,
        feasible,
    })
}

/// Planar-wavefront broadened column covering the angular squint span of `θ₀`.
pub fn far_field_broadened_beam(theta0: f64, geom: &BeamGeometry) -> Result<BroadenedBeam> {
    let s0 = theta0.sin();
    let mut sins = Vec::with_capacity(geom.wavelengths.len());
    for (m, &lambda) in geom.wavelengths.iter().enumerate() {
        let s = s0 * geom.lambda_c / lambda;
        if s.abs() > 1.0 {
            return Err(Error::OutOfVisibleRegion { m });
        }
        sins.push(s);
    }
    let (first, last) = (sins[0], sins[sins.len() - 1]);
    let (g, feasible) = subarray_count(geom.n, (last - first).abs(), None);
    let n_sub = geom.n / g;
    let dir = if last < first { -1.0 } else { 1.0 };
    let center = 0.5 * (first + last);
    let focal: Vec<(f64, f64)> = (1..=g)
        .map(|gi| {
            let k = (2 * gi) as f64 - 1.0 - g as f64;
            (center + dir * k / (2.0 * n_sub as f64), 0.0)
        })
        .collect();
    Ok(BroadenedBeam {
        vector: subarray_beam(geom.n, geom.d, geom.lambda_c, &focal)?,
        g,
        n_sub,
        feasible,
    })
}

/// Column of the requested style for a target at `(r, θ)`.
pub fn styled_beam(style: BeamStyle, r: f64, theta: f64, geom: &BeamGeometry) -> Result<BroadenedBeam> {
    match style {
        BeamStyle::Broadened => broadened_beam(r, theta, geom),
        BeamStyle::FarFieldBroadened => far_field_broadened_beam(theta, geom),
        BeamStyle::Focused => Ok(BroadenedBeam {
            vector: super::squint::focused_beam(r, theta, geom.lambda_c, geom.n, geom.d)?,
            g: 1,
            n_sub: geom.n,
            feasible: true,
        }),
    }
}

//! Beam-squint trajectory of a near-field focused beam and its pre-compensation.

use serde::{Deserialize, Serialize};

use crate::channel::steering_vector;
use crate::error::{Error, Result};
use crate::numerics::CVector;

/// Where a beam focused at `(r₀, θ₀)` on the carrier actually peaks at `λ_m`.
///
/// Returns `(r̃, θ̃)`; `m` only labels the error.
pub fn squint_position(r0: f64, theta0: f64, lambda_m: f64, lambda_c: f64, m: usize) -> Result<(f64, f64)> {
    check_range(r0)?;
    let s = theta0.sin() * lambda_m / lambda_c;
    if s.abs() > 1.0 {
        return Err(Error::OutOfVisibleRegion { m });
    }
    let r = r0 * (lambda_c / lambda_m) * (1.0 - s * s) / theta0.cos().powi(2);
    Ok((r, s.asin()))
}

/// The carrier-frequency focus `(r*, θ*)` whose squinted image at `λ_m` is `(r₀, θ₀)`.
pub fn presquint_position(r0: f64, theta0: f64, lambda_m: f64, lambda_c: f64, m: usize) -> Result<(f64, f64)> {
    check_range(r0)?;
    let s = theta0.sin() * lambda_c / lambda_m;
    if s.abs() > 1.0 {
        return Err(Error::OutOfVisibleRegion { m });
    }
    let r = r0 * (lambda_m / lambda_c) * (1.0 - s * s) / theta0.cos().powi(2);
    Ok((r, s.asin()))
}

fn check_range(r0: f64) -> Result<()> {
    if r0 > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("focus distance must be positive, got {r0}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquintTarget {
    pub r0: f64,
    pub theta0: f64,
    /// `(r̃_m, θ̃_m)` per subcarrier.
    pub squinted: Vec<(f64, f64)>,
    /// `(r*_m, θ*_m)` per subcarrier.
    pub presquint: Vec<(f64, f64)>,
    /// `|sinθ*_M − sinθ*_1|`.
    pub span_sin: f64,
    /// `|1/r*_M − 1/r*_1|`.
    pub span_inv_r: f64,
}

impl SquintTarget {
    pub fn new(r0: f64, theta0: f64, wavelengths: &[f64], lambda_c: f64) -> Result<Self> {
        if wavelengths.is_empty() {
            return Err(Error::InvalidArgument("squint target needs at least one subcarrier".into()));
        }
        let mut squinted = Vec::with_capacity(wavelengths.len());
        let mut presquint = Vec::with_capacity(wavelengths.len());
        for (m, &lambda) in wavelengths.iter().enumerate() {
            squinted.push(squint_position(r0, theta0, lambda, lambda_c, m)?);
            presquint.push(presquint_position(r0, theta0, lambda, lambda_c, m)?);
        }
        let (first, last) = (presquint[0], presquint[presquint.len() - 1]);
        Ok(Self {
            r0,
            theta0,
            span_sin: (last.1.sin() - first.1.sin()).abs(),
            span_inv_r: (1.0 / last.0 - 1.0 / first.0).abs(),
            squinted,
            presquint,
        })
    }

    /// Midpoint of the pre-squint span as `(sinθ, 1/r)`.
    pub fn span_center(&self) -> (f64, f64) {
        let (first, last) = (self.presquint[0], self.presquint[self.presquint.len() - 1]);
        (
            0.5 * (first.1.sin() + last.1.sin()),
            0.5 * (1.0 / first.0 + 1.0 / last.0),
        )
    }

    /// Direction of travel along the span: signs of `sinθ*_M − sinθ*_1` and `1/r*_M − 1/r*_1`.
    pub fn span_direction(&self) -> (f64, f64) {
        let (first, last) = (self.presquint[0], self.presquint[self.presquint.len() - 1]);
        let sign = |v: f64| if v < 0.0 { -1.0 } else { 1.0 };
        (sign(last.1.sin() - first.1.sin()), sign(1.0 / last.0 - 1.0 / first.0))
    }
}

/// `|a_BS(r, θ, λ)^H f|` for a beam on an `n`-element array with spacing `d`.
pub fn array_gain(beam: &CVector, r: f64, theta: f64, lambda: f64, d: f64) -> Result<f64> {
    let a = steering_vector(theta, r, lambda, beam.len(), d)?;
    Ok(a.dotc(beam).norm())
}

/// Carrier-frequency beam focused on `(r₀, θ₀)`.
pub fn focused_beam(r0: f64, theta0: f64, lambda_c: f64, n: usize, d: f64) -> Result<CVector> {
    steering_vector(theta0, r0, lambda_c, n, d)
}

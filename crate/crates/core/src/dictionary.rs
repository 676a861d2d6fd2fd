//! Polar-domain sampling lattice and per-subcarrier projection matrices.

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::steering_vector;
use crate::error::{Error, Result};
use crate::numerics::CMatrix;
use crate::scenario::{LatticeParams, SystemConfig};

const COS2_FLOOR: f64 = 1e-6;
/// Largest cached dictionary, bytes; bigger ones build columns on demand.
pub const CACHE_BUDGET_BYTES: usize = 768 << 20;

/// Joint angle / inverse-distance grid. Flat index `k = s·(ρN) + n`, so the
/// far-field ring occupies the first `ρN` columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarLattice {
    pub n_bs: usize,
    pub params: LatticeParams,
    pub spacing: f64,
    pub lambda_c: f64,
    pub rayleigh: f64,
    pub sin_grid: Vec<f64>,
}

impl PolarLattice {
    pub fn n_angles(&self) -> usize {
        self.sin_grid.len()
    }

    pub fn n_rings(&self) -> usize {
        self.params.s_rings
    }

    pub fn size(&self) -> usize {
        self.n_angles() * self.n_rings()
    }

    pub fn index(&self, n: usize, s: usize) -> usize {
        s * self.n_angles() + n
    }

    /// `(angle index, ring index)` of a flat index.
    pub fn split(&self, k: usize) -> (usize, usize) {
        (k % self.n_angles(), k / self.n_angles())
    }

    fn cos2(&self, n: usize) -> f64 {
        (1.0 - self.sin_grid[n].powi(2)).max(COS2_FLOOR)
    }

    /// `1/r` of ring `s` at angle `n`.
    pub fn inv_r(&self, n: usize, s: usize) -> f64 {
        s as f64 * self.params.eta / (4.0 * self.rayleigh * self.cos2(n))
    }

    pub fn theta(&self, n: usize) -> f64 {
        self.sin_grid[n].asin()
    }

    /// `(θ, r)` of a flat index; `r` is infinite on the far-field ring.
    pub fn point(&self, k: usize) -> (f64, f64) {
        let (n, s) = self.split(k);
        let ir = self.inv_r(n, s);
        (self.theta(n), if ir == 0.0 { f64::INFINITY } else { 1.0 / ir })
    }

    /// Nearest grid index in `sinθ`.
    pub fn nearest_angle(&self, sin_theta: f64) -> usize {
        let na = self.n_angles() as f64;
        let n = ((sin_theta * na + na - 1.0) / 2.0).round();
        n.clamp(0.0, na - 1.0) as usize
    }

    /// Nearest ring in `1/r` at angle index `n`.
    pub fn nearest_ring(&self, n: usize, r: f64) -> usize {
        let step = self.inv_r(n, 1);
        ((1.0 / r) / step).round().clamp(0.0, (self.n_rings() - 1) as f64) as usize
    }

    /// Flat index of the lattice point nearest to `(θ, r)`.
    pub fn nearest(&self, theta: f64, r: f64) -> usize {
        let n = self.nearest_angle(theta.sin());
        self.index(n, self.nearest_ring(n, r))
    }

    /// Distance of the neighbouring ring nearest to `r` at angle index `n`,
    /// excluding `r`'s own ring. Infinite when the only neighbour is the far ring.
    pub fn neighbor_ring_distance(&self, n: usize, s: usize) -> f64 {
        let dist = |ss: usize| {
            let ir = self.inv_r(n, ss);
            if ir == 0.0 {
                f64::INFINITY
            } else {
                1.0 / ir
            }
        };
        let r = dist(s);
        let mut best = f64::INFINITY;
        if s > 0 {
            best = dist(s - 1);
        }
        if s + 1 < self.n_rings() {
            let out = dist(s + 1);
            if (out - r).abs() < (best - r).abs() {
                best = out;
            }
        }
        best
    }
}

/// Closed-form lattice from the configuration.
pub fn build_lattice(config: &SystemConfig) -> PolarLattice {
    lattice_with(config, config.lattice)
}

pub fn lattice_with(config: &SystemConfig, params: LatticeParams) -> PolarLattice {
    let d = config.spacing();
    let lambda_c = config.wavelength_c();
    let aperture = (config.n_bs as f64 - 1.0) * d;
    let na = params.rho * config.n_bs;
    let sin_grid = (0..na)
        .map(|n| (2.0 * n as f64 - na as f64 + 1.0) / na as f64)
        .collect();
    PolarLattice {
        n_bs: config.n_bs,
        params,
        spacing: d,
        lambda_c,
        rayleigh: 2.0 * aperture * aperture / lambda_c,
        sin_grid,
    }
}

/// Second-order expansion `r − δd·sinθ + δ²d²cos²θ/(2r)` of an element distance.
pub fn fresnel_distance(r: f64, theta: f64, delta: f64, d: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("Fresnel distance needs r > 0, got {r}")));
    }
    let o = delta * d;
    Ok(r - o * theta.sin() + o * o * theta.cos().powi(2) / (2.0 * r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DictionaryVariant {
    /// Polar lattice evaluated at each subcarrier wavelength.
    FrequencyDependent,
    /// Polar lattice evaluated at the carrier wavelength for every subcarrier.
    FrequencyFlat,
    /// Far-field ring only, `ρ = 1`, carrier wavelength.
    Dft,
}

impl std::str::FromStr for DictionaryVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frequency-dependent" | "fd" => Ok(Self::FrequencyDependent),
            "frequency-flat" | "flat" => Ok(Self::FrequencyFlat),
            "dft" => Ok(Self::Dft),
            other => Err(Error::InvalidArgument(format!("unknown dictionary variant '{other}'"))),
        }
    }
}

/// Projection matrices `Φ[m]`, cached when they fit [`CACHE_BUDGET_BYTES`].
#[derive(Debug, Clone)]
pub struct PolarDictionary {
    pub variant: DictionaryVariant,
    pub lattice: PolarLattice,
    /// Wavelength used for each subcarrier's columns.
    pub wavelengths: Vec<f64>,
    cache: Option<Vec<CMatrix>>,
}

impl PolarDictionary {
    pub fn new(config: &SystemConfig, variant: DictionaryVariant) -> Self {
        let lattice = match variant {
            DictionaryVariant::Dft => lattice_with(
                config,
                LatticeParams {
                    rho: 1,
                    s_rings: 1,
                    eta: config.lattice.eta,
                },
            ),
            _ => build_lattice(config),
        };
        let wavelengths = match variant {
            DictionaryVariant::FrequencyDependent => config.wavelengths(),
            _ => vec![config.wavelength_c(); config.m_subcarriers],
        };
        let mut dict = Self {
            variant,
            lattice,
            wavelengths,
            cache: None,
        };
        let distinct = if variant == DictionaryVariant::FrequencyDependent { dict.m() } else { 1 };
        let bytes = distinct * dict.lattice.n_bs * dict.lattice.size() * 16;
        if bytes <= CACHE_BUDGET_BYTES {
            let mats: Vec<CMatrix> = (0..distinct).into_par_iter().map(|m| dict.build(m)).collect();
            dict.cache = Some(mats);
        }
        dict
    }

    pub fn m(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn n_columns(&self) -> usize {
        self.lattice.size()
    }

    pub fn is_cached(&self) -> bool {
        self.cache.is_some()
    }

    fn build(&self, m: usize) -> CMatrix {
        let lat = &self.lattice;
        let lambda = self.wavelengths[m];
        let mut phi = CMatrix::zeros(lat.n_bs, lat.size());
        for k in 0..lat.size() {
            let (theta, r) = lat.point(k);
            let a = steering_vector(theta, r, lambda, lat.n_bs, lat.spacing).expect("lattice distance is positive");
            phi.set_column(k, &a);
        }
        phi
    }

    /// `Φ[m]`, borrowed from the cache or freshly built.
    pub fn phi(&self, m: usize) -> Cow<'_, CMatrix> {
        match &self.cache {
            Some(c) if c.len() == 1 => Cow::Borrowed(&c[0]),
            Some(c) => Cow::Borrowed(&c[m]),
            None => Cow::Owned(self.build(m)),
        }
    }

    pub fn column(&self, k: usize, m: usize) -> crate::numerics::CVector {
        if let Some(c) = &self.cache {
            let idx = if c.len() == 1 { 0 } else { m };
            return c[idx].column(k).into_owned();
        }
        let (theta, r) = self.lattice.point(k);
        steering_vector(theta, r, self.wavelengths[m], self.lattice.n_bs, self.lattice.spacing)
            .expect("lattice distance is positive")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small() -> SystemConfig {
        let mut c = SystemConfig::desk();
        c.n_bs = 32;
        c.m_subcarriers = 4;
        c.lattice.s_rings = 4;
        c
    }

    #[test]
    fn rayleigh_distance_of_full_size_array() {
        let cfg = SystemConfig::paper();
        let lat = build_lattice(&cfg);
        let d = cfg.wavelength_c() / 2.0;
        assert_abs_diff_eq!(lat.rayleigh, 2.0 * (511.0 * d).powi(2) / cfg.wavelength_c(), epsilon = 1e-9);
        // 833.4 m assumes c = 3e8 m/s; the exact constant gives 832.79 m
        assert_abs_diff_eq!(lat.rayleigh, 833.4, epsilon = 0.7);
        assert_eq!(lat.size(), 20480);
    }

    #[test]
    fn far_ring_is_infinite_and_rings_increase() {
        let lat = build_lattice(&small());
        for n in 0..lat.n_angles() {
            assert!(lat.point(lat.index(n, 0)).1.is_infinite());
            for s in 1..lat.n_rings() {
                assert!(lat.inv_r(n, s) > lat.inv_r(n, s - 1));
            }
        }
    }

    #[test]
    fn fresnel_matches_worked_example() {
        let f = fresnel_distance(10.0, 0.0, 1.0, 0.31915).unwrap();
        let exact = (100.0f64 + 0.31915f64.powi(2)).sqrt();
        assert_abs_diff_eq!(f, 10.0050929, epsilon = 1e-7);
        assert_abs_diff_eq!(exact, 10.0050910, epsilon = 1e-6);
        assert!(f > exact);
        assert_eq!(fresnel_distance(7.0, 0.3, 0.0, 0.01).unwrap(), 7.0);
        assert!(fresnel_distance(0.0, 0.3, 1.0, 0.01).is_err());
        let err = |r: f64| {
            let e = (r * r + 0.1f64.powi(2) - 2.0 * r * 0.1 * 0.5f64.sin()).sqrt();
            (fresnel_distance(r, 0.5, 1.0, 0.1).unwrap() - e).abs()
        };
        assert!(err(10.0) < err(1.0));
    }

    #[test]
    fn far_ring_columns_are_planar_and_unit_norm() {
        let cfg = small();
        let dict = PolarDictionary::new(&cfg, DictionaryVariant::FrequencyDependent);
        for m in 0..dict.m() {
            let phi = dict.phi(m);
            for k in 0..dict.n_columns() {
                assert_abs_diff_eq!(phi.column(k).norm(), 1.0, epsilon = 1e-12);
            }
            for n in 0..dict.lattice.n_angles() {
                let a = steering_vector(dict.lattice.theta(n), f64::INFINITY, dict.wavelengths[m], 32, cfg.spacing())
                    .unwrap();
                assert!((phi.column(n) - a).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn center_subcarrier_matches_flat_dictionary() {
        let mut cfg = small();
        cfg.m_subcarriers = 1;
        let fd = PolarDictionary::new(&cfg, DictionaryVariant::FrequencyDependent);
        let ff = PolarDictionary::new(&cfg, DictionaryVariant::FrequencyFlat);
        assert!((fd.phi(0).into_owned() - ff.phi(0).into_owned()).norm() < 1e-9);
    }

    #[test]
    fn dft_variant_is_one_ring() {
        let dict = PolarDictionary::new(&small(), DictionaryVariant::Dft);
        assert_eq!(dict.n_columns(), 32);
        assert!("bogus".parse::<DictionaryVariant>().is_err());
    }

    #[test]
    fn on_lattice_path_has_common_support() {
        let cfg = small();
        let dict = PolarDictionary::new(&cfg, DictionaryVariant::FrequencyDependent);
        let k = dict.lattice.index(40, 2);
        let (theta, r) = dict.lattice.point(k);
        for m in 0..dict.m() {
            let a = steering_vector(theta, r, dict.wavelengths[m], 32, cfg.spacing()).unwrap();
            let corr = dict.phi(m).adjoint() * a;
            let best = corr.iter().enumerate().max_by(|x, y| x.1.norm().total_cmp(&y.1.norm())).unwrap().0;
            assert_eq!(best, k);
        }
    }

    #[test]
    fn adjacent_angle_columns_are_not_identical() {
        let dict = PolarDictionary::new(&small(), DictionaryVariant::FrequencyFlat);
        let phi = dict.phi(0);
        for n in 0..dict.lattice.n_angles() - 1 {
            let c = phi.column(n).dotc(&phi.column(n + 1)).norm();
            assert!(c < 1.0 - 1e-6);
        }
    }

    #[test]
    fn on_demand_columns_equal_cached_ones() {
        let cfg = small();
        let dict = PolarDictionary::new(&cfg, DictionaryVariant::FrequencyDependent);
        let mut lazy = dict.clone();
        lazy.cache = None;
        assert!(!lazy.is_cached());
        assert_eq!(lazy.phi(2).into_owned(), dict.phi(2).into_owned());
        assert_eq!(lazy.column(77, 1), dict.column(77, 1));
    }

    #[test]
    fn nearest_recovers_lattice_points() {
        let lat = build_lattice(&small());
        for k in [0, 5, 63, 64 + 10, 3 * 64 + 50] {
            let (theta, r) = lat.point(k);
            assert_eq!(lat.nearest(theta, r), k);
        }
    }
}

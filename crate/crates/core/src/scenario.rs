//! System parameters, random geometry sampling and large-scale path gains.
//!
//! Coordinates: the BS array lies on the y axis centred at the origin with
//! broadside along +x, so a point at polar `(θ, r)` sits at
//! `(r cosθ, r sinθ)`. The UT array axis is `(−sinφ, cosφ)`; a point seen
//! from the UT at bearing ψ has UT-side angle `θ^UT = φ + π − ψ`, which gives
//! `φ = θ^BS + θ^UT` for the direct link.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::complex_normal;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Polar lattice parameters `(ρ, S, η)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeParams {
    pub rho: usize,
    pub s_rings: usize,
    pub eta: f64,
}

/// Log-distance path loss `A + 10·n·log10(d) + c_f·log10(f_GHz)` with LoS/NLoS presets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathLossModel {
    pub intercept_db: f64,
    pub los_exponent: f64,
    pub nlos_exponent: f64,
    pub nlos_offset_db: f64,
    pub frequency_coeff_db: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self {
            intercept_db: 32.4,
            los_exponent: 2.1,
            nlos_exponent: 3.19,
            nlos_offset_db: 10.0,
            frequency_coeff_db: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Los,
    Nlos,
}

impl PathLossModel {
    pub fn loss_db(&self, link: LinkKind, distance: f64, f_c: f64) -> Result<f64> {
        if !(distance > 0.0) || !distance.is_finite() {
            return Err(Error::Domain(format!("path loss needs a positive distance, got {distance}")));
        }
        let (n, offset) = match link {
            LinkKind::Los => (self.los_exponent, 0.0),
            LinkKind::Nlos => (self.nlos_exponent, self.nlos_offset_db),
        };
        Ok(self.intercept_db
            + 10.0 * n * distance.log10()
            + self.frequency_coeff_db * (f_c / 1e9).log10()
            + offset)
    }

    /// Linear power gain `10^(−PL/10)`.
    pub fn gain(&self, link: LinkKind, distance: f64, f_c: f64) -> Result<f64> {
        Ok(10f64.powf(-self.loss_db(link, distance, f_c)? / 10.0))
    }
}

/// Sampling ranges for the random geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryRanges {
    pub scatterer_angle: [f64; 2],
    pub scatterer_range: [f64; 2],
    pub ut_angle: [f64; 2],
    pub ut_range: [f64; 2],
    /// Half-width of the UT orientation offset around the direct-link bearing.
    pub orientation_spread: f64,
    /// Minimum UT-to-scatterer separation in meters.
    pub min_separation: f64,
}

impl Default for GeometryRanges {
    fn default() -> Self {
        Self {
            scatterer_angle: [-PI / 3.0, PI / 3.0],
            scatterer_range: [5.0, 20.0],
            ut_angle: [-PI / 3.0, PI / 3.0],
            ut_range: [5.0, 50.0],
            orientation_spread: PI / 3.0,
            min_separation: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::Config(format!("unknown profile '{other}' (expected desk|paper)"))),
        }
    }
}

/// Every physical and algorithmic knob of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub n_bs: usize,
    pub n_ut: usize,
    pub n_rf_bs: usize,
    pub n_rf_ut: usize,
    /// Downlink data streams `N_s`.
    pub n_streams: usize,
    pub f_c: f64,
    pub bandwidth: f64,
    pub m_subcarriers: usize,
    /// Antenna spacing in meters; half the carrier wavelength when absent.
    pub d_spacing: Option<f64>,
    pub q_bs: usize,
    /// Target uplink SNR per measurement entry, dB.
    pub snr_db: f64,
    /// Explicit uplink power in dBm; overrides `snr_db` when set.
    pub p_t_ul_dbm: Option<f64>,
    pub p_t_dl_dbm: f64,
    pub noise_psd_dbm_hz: f64,
    pub lattice: LatticeParams,
    pub damping: f64,
    pub t_iter: usize,
    /// AMP stops early once the largest posterior-mean change falls below this.
    pub amp_tol: f64,
    pub init_snr_db: f64,
    pub t_grd: usize,
    pub g_los: usize,
    pub l_max: usize,
    pub los_present: bool,
    /// Spatial smoothing parameter; `n_ut / 2` when absent.
    pub k_smooth: Option<usize>,
    /// Oversampling of the UT-side angular grid.
    pub ut_rho: usize,
    pub rng_seed: u64,
    pub path_loss: PathLossModel,
    pub geometry: GeometryRanges,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl SystemConfig {
    /// Reduced-size profile that keeps the full pipeline tractable on one core.
    pub fn desk() -> Self {
        Self {
            n_bs: 128,
            n_ut: 16,
            n_rf_bs: 4,
            n_rf_ut: 4,
            n_streams: 4,
            f_c: 47e9,
            bandwidth: 5e9,
            m_subcarriers: 16,
            d_spacing: None,
            q_bs: 18,
            snr_db: 30.0,
            p_t_ul_dbm: None,
            p_t_dl_dbm: 30.0,
            noise_psd_dbm_hz: -174.0,
            lattice: LatticeParams {
                rho: 2,
                s_rings: 10,
                eta: 5.7,
            },
            damping: 0.8,
            t_iter: 100,
            amp_tol: 1e-6,
            init_snr_db: 10.0,
            t_grd: 10,
            g_los: 1,
            l_max: 6,
            los_present: true,
            k_smooth: None,
            ut_rho: 2,
            rng_seed: 1,
            path_loss: PathLossModel::default(),
            geometry: GeometryRanges::default(),
        }
    }

    /// Full-size array and band.
    pub fn paper() -> Self {
        Self {
            n_bs: 512,
            n_ut: 32,
            m_subcarriers: 64,
            lattice: LatticeParams {
                rho: 2,
                s_rings: 20,
                eta: 1.5,
            },
            ..Self::desk()
        }
    }

    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Desk => Self::desk(),
            Profile::Paper => Self::paper(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_rf_bs < 1 || self.n_rf_bs > self.n_bs {
            return fail(format!("need n_bs >= n_rf_bs >= 1, got {} / {}", self.n_bs, self.n_rf_bs));
        }
        if self.n_rf_ut < 1 || self.n_rf_ut > self.n_ut {
            return fail(format!("need n_ut >= n_rf_ut >= 1, got {} / {}", self.n_ut, self.n_rf_ut));
        }
        if self.m_subcarriers < 1 {
            return fail("m_subcarriers must be >= 1".into());
        }
        if self.lattice.rho < 1 || self.lattice.s_rings < 1 || !(self.lattice.eta > 0.0) {
            return fail(format!("invalid lattice {:?}", self.lattice));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return fail(format!("damping must lie in [0, 1), got {}", self.damping));
        }
        if self.g_los < 1 || self.n_ut % self.g_los != 0 {
            return fail(format!("g_los = {} must divide n_ut = {}", self.g_los, self.n_ut));
        }
        if self.q_bs < 1 || self.t_iter < 1 {
            return fail("q_bs and t_iter must be >= 1".into());
        }
        if !(self.f_c > 0.0) || !(self.bandwidth >= 0.0) || self.bandwidth >= 2.0 * self.f_c {
            return fail(format!("invalid carrier {} Hz / bandwidth {} Hz", self.f_c, self.bandwidth));
        }
        if self.n_streams < 1 || self.n_streams > self.n_rf_bs.min(self.n_rf_ut) {
            return fail(format!("n_streams = {} exceeds the RF chain count", self.n_streams));
        }
        if let Some(k) = self.k_smooth {
            if k < 1 || k >= self.n_ut {
                return fail(format!("k_smooth = {k} must lie in [1, n_ut)"));
            }
        }
        if !self.los_present && self.l_max == 0 {
            return fail("a scenario needs LoS or at least one scatterer".into());
        }
        Ok(())
    }

    pub fn wavelength_c(&self) -> f64 {
        SPEED_OF_LIGHT / self.f_c
    }

    pub fn spacing(&self) -> f64 {
        self.d_spacing.unwrap_or(self.wavelength_c() / 2.0)
    }

    /// Subcarrier frequencies `f_c − BW/2 + (m − ½)·BW/M`, m = 1..M.
    pub fn subcarrier_freqs(&self) -> Vec<f64> {
        let m_total = self.m_subcarriers as f64;
        (1..=self.m_subcarriers)
            .map(|m| self.f_c - self.bandwidth / 2.0 + (m as f64 - 0.5) * self.bandwidth / m_total)
            .collect()
    }

    pub fn wavelengths(&self) -> Vec<f64> {
        self.subcarrier_freqs().into_iter().map(|f| SPEED_OF_LIGHT / f).collect()
    }

    /// Measurement length `P = Q_BS · N_RF_BS`.
    pub fn n_meas(&self) -> usize {
        self.q_bs * self.n_rf_bs
    }

    pub fn k_smooth(&self) -> usize {
        self.k_smooth.unwrap_or(self.n_ut / 2).max(1)
    }

    /// Thermal noise power over the band, watts.
    pub fn noise_power(&self) -> f64 {
        dbm_to_watt(self.noise_psd_dbm_hz + 10.0 * self.bandwidth.log10())
    }

    /// Aperture of the BS array, meters.
    pub fn bs_aperture(&self) -> f64 {
        (self.n_bs as f64 - 1.0) * self.spacing()
    }

    pub fn ut_aperture(&self) -> f64 {
        (self.n_ut as f64 - 1.0) * self.spacing()
    }
}

pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Centred element offset `δ_n = (2n − N − 1)/2` for 1-based `n`.
pub fn delta(n: usize, n_total: usize) -> f64 {
    (2.0 * n as f64 - n_total as f64 - 1.0) / 2.0
}

/// Angle and distance of a point relative to one array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarLink {
    pub theta: f64,
    pub r: f64,
}

impl PolarLink {
    /// Polar coordinates of `(x, y)` relative to the BS.
    pub fn from_cartesian(x: f64, y: f64) -> Self {
        Self {
            theta: y.atan2(x),
            r: x.hypot(y),
        }
    }

    pub fn to_cartesian(self) -> (f64, f64) {
        (self.r * self.theta.cos(), self.r * self.theta.sin())
    }
}

/// Position and orientation of the UT array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtPose {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
}

impl UtPose {
    /// Unit vector along the UT array axis.
    pub fn axis(&self) -> (f64, f64) {
        (-self.phi.sin(), self.phi.cos())
    }

    /// Position of antenna `n` (1-based) for an `n_ut` element array.
    pub fn antenna(&self, n: usize, n_ut: usize, d: f64) -> (f64, f64) {
        let (ux, uy) = self.axis();
        let o = delta(n, n_ut) * d;
        (self.x + o * ux, self.y + o * uy)
    }

    /// UT-side link to a point, with the angle folded into [−π/2, π/2]
    /// (a linear array only senses `sinθ`).
    pub fn link_to(&self, qx: f64, qy: f64) -> PolarLink {
        let (vx, vy) = (qx - self.x, qy - self.y);
        let r = vx.hypot(vy);
        let (ux, uy) = self.axis();
        let s = ((vx * ux + vy * uy) / r).clamp(-1.0, 1.0);
        PolarLink { theta: s.asin(), r }
    }

    /// Centres of `g` equal UT subarrays.
    pub fn subarray_centers(&self, g: usize, n_ut: usize, d: f64) -> Vec<(f64, f64)> {
        let n_sub = n_ut / g;
        let (ux, uy) = self.axis();
        (0..g)
            .map(|gi| {
                let o: f64 = (1..=n_sub).map(|k| delta(gi * n_sub + k, n_ut)).sum::<f64>() / n_sub as f64 * d;
                (self.x + o * ux, self.y + o * uy)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub x: f64,
    pub y: f64,
    pub bs: PolarLink,
    pub ut: PolarLink,
    pub alpha: Complex64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosLink {
    pub bs: PolarLink,
    pub ut: PolarLink,
    pub beta: f64,
}

/// One random realization of UT pose, scatterers and gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGeometry {
    pub ut: UtPose,
    pub los: Option<LosLink>,
    pub scatterers: Vec<Scatterer>,
}

impl ScenarioGeometry {
    pub fn los_present(&self) -> bool {
        self.los.is_some()
    }

    /// UT polar position relative to the BS.
    pub fn ut_polar(&self) -> PolarLink {
        PolarLink::from_cartesian(self.ut.x, self.ut.y)
    }

    pub fn num_paths(&self) -> usize {
        self.scatterers.len() + usize::from(self.los.is_some())
    }

    /// Builds the link records for explicit positions.
    pub fn from_positions(
        config: &SystemConfig,
        ut: UtPose,
        scatterers: &[((f64, f64), Complex64)],
        los_present: bool,
    ) -> Result<Self> {
        let pl = &config.path_loss;
        let los = if los_present {
            let bs = PolarLink::from_cartesian(ut.x, ut.y);
            Some(LosLink {
                bs,
                ut: ut.link_to(0.0, 0.0),
                beta: pl.gain(LinkKind::Los, bs.r, config.f_c)?,
            })
        } else {
            None
        };
        let scatterers = scatterers
            .iter()
            .map(|&((x, y), alpha)| {
                let bs = PolarLink::from_cartesian(x, y);
                let link = ut.link_to(x, y);
                if !(bs.r > 0.0) || !(link.r > 0.0) {
                    return Err(Error::Scenario(format!("scatterer at ({x}, {y}) coincides with an array")));
                }
                Ok(Scatterer {
                    x,
                    y,
                    bs,
                    ut: link,
                    alpha,
                    beta: pl.gain(LinkKind::Nlos, bs.r + link.r, config.f_c)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if los.is_none() && scatterers.is_empty() {
            return Err(Error::Scenario("no LoS and no scatterers".into()));
        }
        Ok(Self { ut, los, scatterers })
    }
}

fn uniform(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    }
}

const MAX_REJECTIONS: usize = 10_000;

/// Draws one geometry; identical seeds give identical scenarios.
pub fn sample_scenario(config: &SystemConfig, seed: u64) -> Result<ScenarioGeometry> {
    config.validate()?;
    let g = &config.geometry;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ut_theta = uniform(&mut rng, g.ut_angle);
    let ut_r = uniform(&mut rng, g.ut_range);
    let phi = ut_theta + uniform(&mut rng, [-g.orientation_spread, g.orientation_spread]);
    let ut = UtPose {
        x: ut_r * ut_theta.cos(),
        y: ut_r * ut_theta.sin(),
        phi,
    };
    let mut scatterers = Vec::with_capacity(config.l_max);
    for _ in 0..config.l_max {
        let mut placed = None;
        for _ in 0..MAX_REJECTIONS {
            let th = uniform(&mut rng, g.scatterer_angle);
            let r = uniform(&mut rng, g.scatterer_range);
            let (x, y) = (r * th.cos(), r * th.sin());
            if (x - ut.x).hypot(y - ut.y) >= g.min_separation {
                placed = Some((x, y));
                break;
            }
        }
        let pos = placed.ok_or_else(|| {
            Error::Scenario(format!("could not place a scatterer {} m away from the UT", g.min_separation))
        })?;
        scatterers.push((pos, complex_normal(&mut rng, 1.0)));
    }
    ScenarioGeometry::from_positions(config, ut, &scatterers, config.los_present)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn los_path_loss_at_ten_meters() {
        let pl = PathLossModel::default();
        let db = pl.loss_db(LinkKind::Los, 10.0, 47e9).unwrap();
        assert_abs_diff_eq!(db, 32.4 + 21.0 + 20.0 * 47f64.log10(), epsilon = 1e-12);
        assert_abs_diff_eq!(db, 86.84, epsilon = 0.01);
        let db10 = pl.loss_db(LinkKind::Los, 100.0, 47e9).unwrap();
        assert_abs_diff_eq!(db10 - db, 21.0, epsilon = 1e-12);
    }

    #[test]
    fn nlos_is_weaker_and_distance_must_be_positive() {
        let pl = PathLossModel::default();
        assert!(pl.gain(LinkKind::Nlos, 10.0, 47e9).unwrap() < pl.gain(LinkKind::Los, 10.0, 47e9).unwrap());
        assert!(matches!(pl.gain(LinkKind::Los, 0.0, 47e9), Err(Error::Domain(_))));
        assert!(matches!(pl.gain(LinkKind::Los, -1.0, 47e9), Err(Error::Domain(_))));
    }

    #[test]
    fn noise_power_default_is_minus_77_dbm() {
        let cfg = SystemConfig::desk();
        let dbm = 10.0 * cfg.noise_power().log10() + 30.0;
        assert_abs_diff_eq!(dbm, -174.0 + 10.0 * 5e9f64.log10(), epsilon = 1e-9);
        assert_abs_diff_eq!(dbm, -77.0, epsilon = 0.02);
    }

    #[test]
    fn subcarriers_are_centered() {
        let cfg = SystemConfig::desk();
        let f = cfg.subcarrier_freqs();
        assert_eq!(f.len(), 16);
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        assert_abs_diff_eq!(mean, cfg.f_c, epsilon = 1e-3);
        assert_abs_diff_eq!(f[0], 47e9 - 2.5e9 + 5e9 / 32.0, epsilon = 1e-3);
    }

    #[test]
    fn sampled_scenario_respects_ranges() {
        let cfg = SystemConfig::desk();
        let s = sample_scenario(&cfg, 7).unwrap();
        assert_eq!(s.scatterers.len(), 6);
        for sc in &s.scatterers {
            assert!(sc.bs.r >= 5.0 && sc.bs.r <= 20.0);
            assert!(sc.bs.theta.abs() <= PI / 3.0);
            assert!(sc.ut.theta.abs() <= PI / 2.0);
        }
        let ut = s.ut_polar();
        assert!(ut.r >= 5.0 && ut.r <= 50.0);
        assert_eq!(s, sample_scenario(&cfg, 7).unwrap());
        assert_ne!(s, sample_scenario(&cfg, 8).unwrap());
    }

    #[test]
    fn direct_link_angles_sum_to_orientation() {
        let cfg = SystemConfig::desk();
        for seed in 0..50 {
            let s = sample_scenario(&cfg, seed).unwrap();
            let los = s.los.as_ref().unwrap();
            assert_abs_diff_eq!(los.bs.theta + los.ut.theta, s.ut.phi, epsilon = 1e-9);
        }
    }

    #[test]
    fn ut_link_matches_antenna_distances() {
        let ut = UtPose { x: 10.0, y: 3.0, phi: 0.4 };
        let d = 0.01;
        let link = ut.link_to(2.0, -5.0);
        for n in 1..=8 {
            let (ax, ay) = ut.antenna(n, 8, d);
            let exact = (ax - 2.0).hypot(ay + 5.0);
            let dl = delta(n, 8) * d;
            let formula = (link.r * link.r + dl * dl - 2.0 * link.r * dl * link.theta.sin()).sqrt();
            assert_abs_diff_eq!(exact, formula, epsilon = 1e-12);
        }
    }

    #[test]
    fn uniform_angle_mean_is_zero() {
        let cfg = SystemConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000;
        let mean = (0..n).map(|_| uniform(&mut rng, cfg.geometry.scatterer_angle)).sum::<f64>() / n as f64;
        let sd = (2.0 * PI / 3.0) / 12f64.sqrt() / (n as f64).sqrt();
        assert!(mean.abs() < 3.0 * sd);
    }

    #[test]
    fn config_validation_and_profiles() {
        assert!(SystemConfig::desk().validate().is_ok());
        assert!(SystemConfig::paper().validate().is_ok());
        let mut bad = SystemConfig::desk();
        bad.g_los = 3;
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        bad = SystemConfig::desk();
        bad.damping = 1.0;
        assert!(bad.validate().is_err());
        assert_eq!(SystemConfig::desk().n_meas(), 72);
        assert_eq!("paper".parse::<Profile>().unwrap(), Profile::Paper);
        assert!("huge".parse::<Profile>().is_err());
    }

    #[test]
    fn config_toml_round_trip() {
        let cfg = SystemConfig::paper();
        let text = toml::to_string(&cfg).unwrap();
        let back: SystemConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        let partial: SystemConfig = toml::from_str("n_bs = 64\n").unwrap();
        assert_eq!(partial.n_bs, 64);
        assert_eq!(partial.n_ut, SystemConfig::desk().n_ut);
    }
}

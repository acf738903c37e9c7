//! Single-sector uplink channel generator: user drops, log-distance path
//! loss with log-normal shadowing and a distance-dependent LOS probability,
//! and an 8-tap delay-line small-scale model with exponential antenna
//! correlation at both ends.
//!
//! The small-scale state is drawn independently per reporting block
//! (`C_B` subchannels × `T_B` time slots) and is constant inside a block.
//! Draws are derived from `(seed, user, block)` so any block can be
//! regenerated on demand without materializing the whole horizon.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcs::db_to_linear;

pub type CMatrix = DMatrix<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Rma,
    Uma,
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rma" => Ok(Self::Rma),
            "uma" => Ok(Self::Uma),
            other => Err(Error::Config(format!("unknown scenario preset {other:?}"))),
        }
    }
}

/// `PL(d) = ref_loss_db + 10 · exponent · log10(d / 1 m)` plus zero-mean
/// Gaussian shadowing in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    pub ref_loss_db: f64,
    pub exponent: f64,
    pub shadowing_std_db: f64,
}

impl PathLossModel {
    pub fn loss_db(&self, distance_m: f64) -> f64 {
        self.ref_loss_db + 10.0 * self.exponent * distance_m.log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum LosProbability {
    /// `min(d1/d, 1)(1 − e^{−d/d2}) + e^{−d/d2}`
    Uma {
        d1: f64,
        d2: f64,
    },
    /// 1 up to `d0`, then `e^{−(d − d0)/scale}`
    Rma {
        d0: f64,
        scale: f64,
    },
    Constant {
        p: f64,
    },
}

impl LosProbability {
    pub fn probability(&self, d: f64) -> f64 {
        match *self {
            LosProbability::Uma { d1, d2 } => {
                if d <= d1 {
                    1.0
                } else {
                    let e = (-d / d2).exp();
                    (d1 / d) * (1.0 - e) + e
                }
            }
            LosProbability::Rma { d0, scale } => {
                if d <= d0 {
                    1.0
                } else {
                    (-(d - d0) / scale).exp()
                }
            }
            LosProbability::Constant { p } => p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub delay_s: f64,
    pub power_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub cell_radius_m: f64,
    pub min_distance_m: f64,
    pub carrier_freq_hz: f64,
    pub pathloss_los: PathLossModel,
    pub pathloss_nlos: PathLossModel,
    pub los_probability: LosProbability,
    pub taps: Vec<Tap>,
    pub k_factor_db: f64,
    pub corr_coeff: f64,
    pub num_bs_antennas: usize,
    pub num_user_antennas: usize,
    pub num_subchannels: usize,
    pub subchannel_bw_hz: f64,
    pub report_block_subchannels: usize,
    pub report_block_slots: usize,
    pub noise_density_dbm_hz: f64,
    pub noise_figure_db: f64,
}

fn fc_term(fc_hz: f64) -> f64 {
    20.0 * (fc_hz / 1e9).log10()
}

const TAP_POWERS_DB: [f64; 8] = [0.0, -1.5, -3.2, -4.8, -6.7, -8.9, -11.4, -14.0];
const TAP_DELAYS_NS: [f64; 8] = [0.0, 40.0, 90.0, 160.0, 250.0, 370.0, 520.0, 700.0];

fn tap_profile(delay_scale: f64) -> Vec<Tap> {
    TAP_DELAYS_NS
        .iter()
        .zip(TAP_POWERS_DB)
        .map(|(&d, p)| Tap {
            delay_s: d * 1e-9 * delay_scale,
            power_db: p,
        })
        .collect()
}

impl ScenarioConfig {
    /// Urban macro: 300 m sector, 3.5 GHz.
    pub fn uma() -> Self {
        let fc = 3.5e9;
        Self {
            kind: ScenarioKind::Uma,
            cell_radius_m: 300.0,
            min_distance_m: 35.0,
            carrier_freq_hz: fc,
            pathloss_los: PathLossModel {
                ref_loss_db: 28.0 + fc_term(fc),
                exponent: 2.2,
                shadowing_std_db: 4.0,
            },
            pathloss_nlos: PathLossModel {
                ref_loss_db: 13.54 + fc_term(fc),
                exponent: 3.908,
                shadowing_std_db: 6.0,
            },
            los_probability: LosProbability::Uma { d1: 18.0, d2: 63.0 },
            taps: tap_profile(1.0),
            k_factor_db: 7.0,
            corr_coeff: 0.4,
            num_bs_antennas: 64,
            num_user_antennas: 4,
            num_subchannels: 78,
            subchannel_bw_hz: 360e3,
            report_block_subchannels: 13,
            report_block_slots: 2,
            noise_density_dbm_hz: -174.0,
            noise_figure_db: 9.0,
        }
    }

    /// Rural macro: 1000 m sector, 3.5 GHz, shorter delay spread.
    pub fn rma() -> Self {
        let fc = 3.5e9;
        Self {
            kind: ScenarioKind::Rma,
            cell_radius_m: 1000.0,
            min_distance_m: 35.0,
            pathloss_los: PathLossModel {
                ref_loss_db: 20.0 * (40.0 * PI * (fc / 1e9) / 3.0).log10() - 0.7,
                exponent: 2.1,
                shadowing_std_db: 4.0,
            },
            pathloss_nlos: PathLossModel {
                ref_loss_db: 14.52,
                exponent: 3.863,
                shadowing_std_db: 8.0,
            },
            los_probability: LosProbability::Rma {
                d0: 10.0,
                scale: 1000.0,
            },
            taps: tap_profile(0.3),
            ..Self::uma()
        }
    }

    pub fn preset(kind: ScenarioKind) -> Self {
        match kind {
            ScenarioKind::Rma => Self::rma(),
            ScenarioKind::Uma => Self::uma(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if !(self.cell_radius_m > 0.0) {
            return err(format!("cell radius must be positive, got {}", self.cell_radius_m));
        }
        if !(self.min_distance_m >= 0.0 && self.min_distance_m < self.cell_radius_m) {
            return err("minimum distance must lie in [0, cell radius)".into());
        }
        if !(0.0..1.0).contains(&self.corr_coeff) {
            return err(format!(
                "correlation coefficient must lie in [0, 1), got {}",
                self.corr_coeff
            ));
        }
        if self.taps.is_empty() {
            return err("tap profile must not be empty".into());
        }
        if self.num_bs_antennas == 0 || self.num_user_antennas == 0 {
            return err("antenna counts must be at least 1".into());
        }
        if self.num_subchannels == 0 {
            return err("at least one subchannel is required".into());
        }
        if self.report_block_subchannels == 0 || self.report_block_slots == 0 {
            return err("reporting block dimensions must be at least 1".into());
        }
        if !(self.subchannel_bw_hz > 0.0) {
            return err("subchannel bandwidth must be positive".into());
        }
        Ok(())
    }

    /// Tap powers in linear scale, normalized to sum to one.
    pub fn normalized_tap_powers(&self) -> Vec<f64> {
        let lin: Vec<f64> = self.taps.iter().map(|t| db_to_linear(t.power_db)).collect();
        let total: f64 = lin.iter().sum();
        lin.into_iter().map(|p| p / total).collect()
    }

    /// Number of frequency-domain reporting blocks in a time slot.
    pub fn freq_blocks(&self) -> usize {
        self.num_subchannels.div_ceil(self.report_block_subchannels)
    }

    /// Offset of a reporting block's center from the band center, in Hz.
    pub fn block_freq_offset(&self, fblock: usize) -> f64 {
        let start = fblock * self.report_block_subchannels;
        let end = ((fblock + 1) * self.report_block_subchannels).min(self.num_subchannels);
        let block_center = (start + end - 1) as f64 / 2.0;
        let band_center = (self.num_subchannels - 1) as f64 / 2.0;
        (block_center - band_center) * self.subchannel_bw_hz
    }
}

/// Noise power per subchannel in mW.
pub fn noise_power(config: &ScenarioConfig) -> f64 {
    db_to_linear(config.noise_density_dbm_hz + 10.0 * config.subchannel_bw_hz.log10() + config.noise_figure_db)
}

/// Exponential correlation model, entry (i, j) = rho^|i−j|.
pub fn exp_corr_matrix(n: usize, rho: f64) -> Result<DMatrix<f64>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Config(format!("correlation coefficient {rho} outside [0, 1)")));
    }
    if n == 0 {
        return Err(Error::Config("correlation matrix needs at least one antenna".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rho.powi(i.abs_diff(j) as i32)))
}

/// Principal square root of a symmetric positive-definite matrix.
fn spd_sqrt(m: DMatrix<f64>) -> CMatrix {
    let eig = SymmetricEigen::new(m);
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    let root = &eig.eigenvectors * d * eig.eigenvectors.transpose();
    root.map(|x| Complex64::new(x, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserDrop {
    pub x: f64,
    pub y: f64,
    pub distance_m: f64,
    /// Azimuth relative to the sector boresight, radians.
    pub azimuth: f64,
    pub los: bool,
    pub shadowing_db: f64,
    pub pathloss_db: f64,
    pub large_scale_gain: f64,
    /// Departure angle of the LOS ray at the user array, radians.
    pub user_angle: f64,
}

/// One Monte Carlo unit: a fixed user drop plus the small-scale process
/// over `horizon` time slots.
#[derive(Debug, Clone)]
pub struct Realization {
    pub seed: u64,
    pub horizon: usize,
    pub users: Vec<UserDrop>,
    config: ScenarioConfig,
    tap_powers: Vec<f64>,
    user_corr_sqrt: CMatrix,
    bs_corr_sqrt: CMatrix,
}

fn cgauss<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn block_rng(seed: u64, a: u64, b: u64, c: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&a.to_le_bytes());
    key[16..24].copy_from_slice(&b.to_le_bytes());
    key[24..].copy_from_slice(&c.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Draws users uniformly over the 120° sector and their large-scale state.
pub fn generate_realization(
    config: &ScenarioConfig,
    num_users: usize,
    horizon: usize,
    seed: u64,
) -> Result<Realization> {
    config.validate()?;
    if num_users == 0 {
        return Err(Error::Config("at least one user is required".into()));
    }
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least one time slot".into()));
    }
    let mut rng = block_rng(seed, u64::MAX, 0, 0);
    let (r_min, r_max) = (config.min_distance_m, config.cell_radius_m);
    let users = (0..num_users)
        .map(|_| {
            // area-uniform radius on the annulus; 1 − u keeps d > 0 when r_min = 0
            let u: f64 = 1.0 - rng.random::<f64>();
            let d = (r_min * r_min + u * (r_max * r_max - r_min * r_min)).sqrt();
            let azimuth = (rng.random::<f64>() - 0.5) * (2.0 * PI / 3.0);
            let los = rng.random::<f64>() < config.los_probability.probability(d);
            let pl = if los { config.pathloss_los } else { config.pathloss_nlos };
            let z: f64 = StandardNormal.sample(&mut rng);
            let shadowing_db = z * pl.shadowing_std_db;
            let pathloss_db = pl.loss_db(d);
            let user_angle = (rng.random::<f64>() - 0.5) * PI;
            UserDrop {
                x: d * azimuth.cos(),
                y: d * azimuth.sin(),
                distance_m: d,
                azimuth,
                los,
                shadowing_db,
                pathloss_db,
                large_scale_gain: db_to_linear(-(pathloss_db + shadowing_db)),
                user_angle,
            }
        })
        .collect();
    Ok(Realization {
        seed,
        horizon,
        users,
        tap_powers: config.normalized_tap_powers(),
        user_corr_sqrt: spd_sqrt(exp_corr_matrix(config.num_user_antennas, config.corr_coeff)?),
        bs_corr_sqrt: spd_sqrt(exp_corr_matrix(config.num_bs_antennas, config.corr_coeff)?),
        config: config.clone(),
    })
}

impl Realization {
    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    /// Number of reporting-block epochs along time.
    pub fn time_blocks(&self) -> usize {
        self.horizon.div_ceil(self.config.report_block_slots)
    }

    /// Reporting block `(frequency block, time block)` containing a PRB.
    pub fn block_of(&self, subchannel: usize, slot: usize) -> (usize, usize) {
        (
            subchannel / self.config.report_block_subchannels,
            slot / self.config.report_block_slots,
        )
    }

    /// Small-scale tap coefficients (one `M_U × M_B` matrix per tap) of a
    /// user in one reporting block, before antenna correlation.
    pub fn taps(&self, user: usize, fblock: usize, tblock: usize) -> Vec<CMatrix> {
        let cfg = &self.config;
        let (mu, mb) = (cfg.num_user_antennas, cfg.num_bs_antennas);
        let mut rng = block_rng(self.seed, user as u64, fblock as u64, tblock as u64);
        let drop = &self.users[user];
        let k = db_to_linear(cfg.k_factor_db);
        self.tap_powers
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let scatter = CMatrix::from_fn(mu, mb, |_, _| cgauss(&mut rng));
                if i == 0 && drop.los {
                    let (sb, su) = (drop.azimuth.sin(), drop.user_angle.sin());
                    let los = CMatrix::from_fn(mu, mb, |n, m| {
                        Complex64::from_polar(1.0, PI * (m as f64 * sb + n as f64 * su))
                    });
                    let (a, b) = ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt());
                    (los.map(|z| z * a) + scatter.map(|z| z * b)).map(|z| z * p.sqrt())
                } else {
                    scatter.map(|z| z * p.sqrt())
                }
            })
            .collect()
    }

    fn check(&self, user: usize, subchannel: usize, slot: usize) -> Result<()> {
        let oor = |what, index, limit| Err(Error::OutOfRange { what, index, limit });
        if user >= self.users.len() {
            return oor("user", user, self.users.len());
        }
        if subchannel >= self.config.num_subchannels {
            return oor("subchannel", subchannel, self.config.num_subchannels);
        }
        if slot >= self.horizon {
            return oor("time slot", slot, self.horizon);
        }
        Ok(())
    }

    /// Channel of one user in one reporting block.
    pub fn block_channel(&self, user: usize, fblock: usize, tblock: usize) -> CMatrix {
        let f_off = self.config.block_freq_offset(fblock);
        let taps = self.taps(user, fblock, tblock);
        let mut hw = CMatrix::zeros(self.config.num_user_antennas, self.config.num_bs_antennas);
        for (tap, profile) in taps.iter().zip(&self.config.taps) {
            let phase = Complex64::from_polar(1.0, -2.0 * PI * f_off * profile.delay_s);
            hw += tap * phase;
        }
        let g = self.users[user].large_scale_gain.sqrt();
        (&self.user_corr_sqrt * hw * &self.bs_corr_sqrt) * Complex64::new(g, 0.0)
    }

    /// `M_U × M_B` channel of `user` on subchannel `subchannel` in slot `slot`.
    pub fn channel_matrix(&self, user: usize, subchannel: usize, slot: usize) -> Result<CMatrix> {
        self.check(user, subchannel, slot)?;
        let (fb, tb) = self.block_of(subchannel, slot);
        Ok(self.block_channel(user, fb, tb))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn corr_matrix_examples() {
        assert_eq!(exp_corr_matrix(1, 0.7).unwrap(), DMatrix::from_element(1, 1, 1.0));
        let m = exp_corr_matrix(3, 0.4).unwrap();
        assert_eq!(m[(0, 0)], 1.0);
        assert_relative_eq!(m[(0, 1)], 0.4);
        assert_relative_eq!(m[(0, 2)], 0.16, max_relative = 1e-15);
        assert_relative_eq!(m[(2, 1)], 0.4);
        assert_eq!(exp_corr_matrix(2, 0.0).unwrap(), DMatrix::identity(2, 2));
        assert!(exp_corr_matrix(2, 1.0).is_err());
        assert!(exp_corr_matrix(2, -0.1).is_err());
    }

    #[test]
    fn sqrt_squares_back() {
        let m = exp_corr_matrix(5, 0.4).unwrap();
        let r = spd_sqrt(m.clone());
        let sq = &r * &r;
        for i in 0..5 {
            for j in 0..5 {
                assert!((sq[(i, j)].re - m[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn noise_examples() {
        let cfg = ScenarioConfig::uma();
        // 10^((-174 + 10 log10(360e3) + 9) / 10), evaluated at 40 digits
        assert_relative_eq!(noise_power(&cfg), 1.1384199576606166e-11, max_relative = 1e-12);
        let unit = ScenarioConfig {
            noise_figure_db: 0.0,
            subchannel_bw_hz: 1.0,
            ..cfg.clone()
        };
        assert_relative_eq!(noise_power(&unit), 10f64.powf(-17.4), max_relative = 1e-13);
        let double = ScenarioConfig {
            subchannel_bw_hz: 2.0 * cfg.subchannel_bw_hz,
            ..cfg.clone()
        };
        let diff = 10.0 * (noise_power(&double) / noise_power(&cfg)).log10();
        assert_relative_eq!(diff, 10.0 * 2f64.log10(), max_relative = 1e-12);
    }

    #[test]
    fn taps_normalized() {
        for cfg in [ScenarioConfig::uma(), ScenarioConfig::rma()] {
            assert_eq!(cfg.taps.len(), 8);
            let s: f64 = cfg.normalized_tap_powers().iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn block_offsets_symmetric() {
        let cfg = ScenarioConfig::uma();
        let n = cfg.freq_blocks();
        assert_eq!(n, 6);
        for b in 0..n {
            assert_relative_eq!(
                cfg.block_freq_offset(b),
                -cfg.block_freq_offset(n - 1 - b),
                epsilon = 1e-6
            );
        }
    }

    #[test]
    fn los_probability_shapes() {
        let uma = LosProbability::Uma { d1: 18.0, d2: 63.0 };
        assert_eq!(uma.probability(10.0), 1.0);
        assert!(uma.probability(300.0) < uma.probability(100.0));
        let rma = LosProbability::Rma {
            d0: 10.0,
            scale: 1000.0,
        };
        assert_relative_eq!(rma.probability(1010.0), (-1.0f64).exp());
    }

    #[test]
    fn out_of_range_indices() {
        let cfg = ScenarioConfig {
            num_bs_antennas: 4,
            num_user_antennas: 2,
            num_subchannels: 4,
            report_block_subchannels: 2,
            ..ScenarioConfig::uma()
        };
        let r = generate_realization(&cfg, 2, 3, 1).unwrap();
        assert!(r.channel_matrix(2, 0, 0).is_err());
        assert!(r.channel_matrix(0, 4, 0).is_err());
        assert!(r.channel_matrix(0, 0, 3).is_err());
        assert!(r.channel_matrix(1, 3, 2).is_ok());
    }
}

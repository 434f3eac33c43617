//! Link budget: WINNER+ B1 line-of-sight path loss, spatially correlated
//! log-normal shadowing, antenna gains, thermal noise and SINR arithmetic.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::scenario::{RoadScenario, VehicleId};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Thermal noise density at 290 K.
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

/// Coefficients of the two-slope B1 LOS model:
///
/// `PL = near_slope·log10(d) + near_intercept + near_freq·log10(fc/5)` below the breakpoint,
/// `PL = far_slope·log10(d) + far_intercept − height·log10(h'tx) − height·log10(h'rx) + far_freq·log10(fc/5)` above it,
///
/// with `d'BP = 4·h'tx·h'rx·fc/c` and `h' = h − effective_height_offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathLossCoefficients {
    pub near_slope_db: f64,
    pub near_intercept_db: f64,
    pub near_freq_db: f64,
    pub far_slope_db: f64,
    pub far_intercept_db: f64,
    pub height_db: f64,
    pub far_freq_db: f64,
    pub tx_height_m: f64,
    pub rx_height_m: f64,
    pub effective_height_offset_m: f64,
}

impl Default for PathLossCoefficients {
    fn default() -> Self {
        Self {
            near_slope_db: 22.7,
            near_intercept_db: 41.0,
            near_freq_db: 20.0,
            far_slope_db: 40.0,
            far_intercept_db: 9.45,
            height_db: 17.3,
            far_freq_db: 2.7,
            tx_height_m: 1.5,
            rx_height_m: 1.5,
            effective_height_offset_m: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    pub carrier_freq_ghz: f64,
    pub antenna_gain_tx_db: f64,
    pub antenna_gain_rx_db: f64,
    pub noise_figure_db: f64,
    /// Variance of the shadowing term in dB².
    pub shadowing_variance_db2: f64,
    pub decorrelation_distance_m: f64,
    /// Distances below this are evaluated at this value.
    pub min_distance_m: f64,
    pub path_loss: PathLossCoefficients,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            carrier_freq_ghz: 5.9,
            antenna_gain_tx_db: 3.0,
            antenna_gain_rx_db: 3.0,
            noise_figure_db: 9.0,
            shadowing_variance_db2: 3.0,
            decorrelation_distance_m: 25.0,
            min_distance_m: 1.0,
            path_loss: PathLossCoefficients::default(),
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.shadowing_variance_db2 >= 0.0) {
            return Err(ConfigError::invalid(
                "propagation.shadowing_variance_db2",
                "variance must be non-negative",
            ));
        }
        if !(self.decorrelation_distance_m > 0.0) {
            return Err(ConfigError::invalid(
                "propagation.decorrelation_distance_m",
                "decorrelation distance must be positive",
            ));
        }
        if !(self.min_distance_m > 0.0) {
            return Err(ConfigError::invalid(
                "propagation.min_distance_m",
                "minimum distance must be positive",
            ));
        }
        if !(self.carrier_freq_ghz > 0.0) {
            return Err(ConfigError::invalid(
                "propagation.carrier_freq_ghz",
                "carrier frequency must be positive",
            ));
        }
        let pl = &self.path_loss;
        if pl.tx_height_m <= pl.effective_height_offset_m || pl.rx_height_m <= pl.effective_height_offset_m {
            return Err(ConfigError::invalid(
                "propagation.path_loss",
                "antenna heights must exceed the effective height offset",
            ));
        }
        let bp = self.breakpoint_m();
        let jump = self.far_segment_db(bp) - self.near_segment_db(bp);
        if jump.abs() > 0.1 {
            return Err(ConfigError::invalid(
                "propagation.path_loss",
                format!("path loss discontinuous at the {bp:.2} m breakpoint ({jump:.3} dB)"),
            ));
        }
        Ok(())
    }

    pub fn breakpoint_m(&self) -> f64 {
        let pl = &self.path_loss;
        let htx = pl.tx_height_m - pl.effective_height_offset_m;
        let hrx = pl.rx_height_m - pl.effective_height_offset_m;
        4.0 * htx * hrx * self.carrier_freq_ghz * 1e9 / SPEED_OF_LIGHT
    }

    fn freq_term(&self) -> f64 {
        (self.carrier_freq_ghz / 5.0).log10()
    }

    fn near_segment_db(&self, d: f64) -> f64 {
        let pl = &self.path_loss;
        pl.near_slope_db * d.log10() + pl.near_intercept_db + pl.near_freq_db * self.freq_term()
    }

    fn far_constant_db(&self) -> f64 {
        let pl = &self.path_loss;
        let htx = pl.tx_height_m - pl.effective_height_offset_m;
        let hrx = pl.rx_height_m - pl.effective_height_offset_m;
        pl.far_intercept_db - pl.height_db * htx.log10() - pl.height_db * hrx.log10()
            + pl.far_freq_db * self.freq_term()
    }

    fn far_segment_db(&self, d: f64) -> f64 {
        self.path_loss.far_slope_db * d.log10() + self.far_constant_db()
    }

    pub fn shadowing_sigma_db(&self) -> f64 {
        self.shadowing_variance_db2.sqrt()
    }

    pub fn antenna_gains_db(&self) -> f64 {
        self.antenna_gain_tx_db + self.antenna_gain_rx_db
    }
}

/// Median path loss in dB at `distance_m`.
pub fn path_loss_db(distance_m: f64, cfg: &PropagationConfig) -> f64 {
    let d = distance_m.max(cfg.min_distance_m);
    if d < cfg.breakpoint_m() {
        cfg.near_segment_db(d)
    } else {
        cfg.far_segment_db(d)
    }
}

/// Largest distance whose median path loss does not exceed `loss_db`.
pub fn max_distance_for_loss(loss_db: f64, cfg: &PropagationConfig) -> f64 {
    let bp = cfg.breakpoint_m();
    if loss_db < path_loss_db(cfg.min_distance_m, cfg) {
        // Not even the clamped minimum distance closes the link.
        return 0.0;
    }
    if cfg.min_distance_m < bp && loss_db < cfg.far_segment_db(bp) {
        let pl = &cfg.path_loss;
        let d = 10f64.powf(
            (loss_db - pl.near_intercept_db - pl.near_freq_db * cfg.freq_term()) / pl.near_slope_db,
        );
        return d.clamp(cfg.min_distance_m, bp);
    }
    let d = 10f64.powf((loss_db - cfg.far_constant_db()) / cfg.path_loss.far_slope_db);
    d.max(cfg.min_distance_m)
}

/// `−174 + 10·log10(BW) + NF`.
pub fn noise_dbm(occupied_bandwidth_hz: f64, cfg: &PropagationConfig) -> f64 {
    THERMAL_NOISE_DBM_PER_HZ + 10.0 * occupied_bandwidth_hz.log10() + cfg.noise_figure_db
}

#[inline]
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

#[inline]
pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Signal over noise plus the linear sum of interference.
pub fn sinr_db(rx_power_dbm: f64, interferer_powers_dbm: &[f64], noise_dbm: f64) -> f64 {
    let interference: f64 = interferer_powers_dbm.iter().map(|p| dbm_to_mw(*p)).sum();
    mw_to_dbm(dbm_to_mw(rx_power_dbm) / (dbm_to_mw(noise_dbm) + interference))
}

/// Frozen per-link gains for one drop. Gains include path loss, shadowing
/// and both antenna gains; the matrix is symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    n: usize,
    gain_db: Vec<f64>,
    pub seed: u64,
}

impl ChannelRealization {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Total link gain in dB (negative: it is a loss).
    #[inline]
    pub fn gain_db(&self, a: VehicleId, b: VehicleId) -> f64 {
        self.gain_db[a.0 * self.n + b.0]
    }

    /// Row-major gain matrix, `n × n`.
    pub fn gains_db(&self) -> &[f64] {
        &self.gain_db
    }

    /// Writes the gain matrix as whitespace-separated text, one row per line.
    pub fn write_matrix<W: Write>(&self, mut w: W) -> io::Result<()> {
        for row in self.gain_db.chunks(self.n.max(1)) {
            let line: Vec<String> = row.iter().map(|g| format!("{g:.6}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Builds the channel for a drop.
///
/// Shadowing is the upper triangle of a separable 2-D Gauss–Markov field
/// over (position of lower-index endpoint, position of higher-index
/// endpoint). Links sharing an endpoint then have shadowing correlation
/// `exp(−Δd/d_corr)` where `Δd` is the separation of the other endpoints.
pub fn build_channel(scenario: &RoadScenario, cfg: &PropagationConfig, rng_seed: u64) -> ChannelRealization {
    let n = scenario.len();
    let mut gain_db = vec![0.0; n * n];
    let sigma = cfg.shadowing_sigma_db();
    let gains = cfg.antenna_gains_db();

    // Correlation between consecutive coordinates.
    let rho: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 {
                0.0
            } else {
                let dx = scenario.positions[i] - scenario.positions[i - 1];
                (-dx / cfg.decorrelation_distance_m).exp()
            }
        })
        .collect();
    let innov: Vec<f64> = rho.iter().map(|r| (1.0 - r * r).sqrt()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut prev = vec![0.0f64; n];
    let mut cur = vec![0.0f64; n];
    for i in 0..n {
        for j in 0..n {
            let w: f64 = if sigma > 0.0 { StandardNormal.sample(&mut rng) } else { 0.0 };
            let up = if i > 0 { rho[i] * prev[j] } else { 0.0 };
            let left = if j > 0 { rho[j] * cur[j - 1] } else { 0.0 };
            let diag = if i > 0 && j > 0 { rho[i] * rho[j] * prev[j - 1] } else { 0.0 };
            cur[j] = up + left - diag + sigma * innov[i] * innov[j] * w;
        }
        for j in (i + 1)..n {
            let d = scenario.distance_idx(i, j);
            let g = -path_loss_db(d, cfg) + cur[j] + gains;
            gain_db[i * n + j] = g;
            gain_db[j * n + i] = g;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    ChannelRealization {
        n,
        gain_db,
        seed: rng_seed,
    }
}

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::csma::CsmaConfig;
use crate::dcc::{channel_occupancy, DccConfig};
use crate::error::ConfigError;
use crate::phy::{mcs_profile, McsId, McsProfile, PhyConfig, Technology, PAYLOAD_BYTES};
use crate::propagation::PropagationConfig;
use crate::sps::SpsConfig;
use crate::transmission::Micros;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoadConfig {
    pub length_m: f64,
    pub wraparound: bool,
    /// Fixed vehicle positions instead of a random drop.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positions_file: Option<PathBuf>,
}

impl Default for RoadConfig {
    fn default() -> Self {
        Self {
            length_m: 2000.0,
            wraparound: true,
            positions_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub bin_width_m: u32,
    pub max_distance_m: u32,
    /// Inclusive bound for the near-range PDR, gaps and neighbor counts.
    pub awareness_range_m: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            bin_width_m: 10,
            max_distance_m: 1000,
            awareness_range_m: 100.0,
        }
    }
}

impl MetricsConfig {
    pub fn bins(&self) -> usize {
        (self.max_distance_m / self.bin_width_m.max(1)) as usize
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.bin_width_m == 0 || self.max_distance_m % self.bin_width_m != 0 || self.max_distance_m == 0 {
            return Err(ConfigError::invalid(
                "metrics.bin_width_m",
                "must be positive and divide metrics.max_distance_m",
            ));
        }
        if !(self.awareness_range_m > 0.0) {
            return Err(ConfigError::invalid("metrics.awareness_range_m", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub technology: Technology,
    pub rho_veh_per_km: f64,
    pub fb_hz: f64,
    pub pt_dbm: f64,
    pub mcs: McsId,
    pub payload_bytes: u32,
    pub sim_time_s: f64,
    /// Defaults to `max(τ_sense, 2/f_b)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup_s: Option<f64>,
    pub replications: u32,
    pub seed: u64,
    pub road: RoadConfig,
    pub propagation: PropagationConfig,
    pub phy: PhyConfig,
    pub csma: CsmaConfig,
    pub sps: SpsConfig,
    pub dcc: DccConfig,
    pub metrics: MetricsConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            technology: Technology::Ieee80211pStar,
            rho_veh_per_km: 300.0,
            fb_hz: 10.0,
            pt_dbm: 23.0,
            mcs: McsId::B,
            payload_bytes: PAYLOAD_BYTES,
            sim_time_s: 20.0,
            warmup_s: None,
            replications: 10,
            seed: 1,
            road: RoadConfig::default(),
            propagation: PropagationConfig::default(),
            phy: PhyConfig::default(),
            csma: CsmaConfig::default(),
            sps: SpsConfig::default(),
            dcc: DccConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn mcs_profile(&self) -> McsProfile {
        mcs_profile(self.mcs)
    }

    pub fn warmup(&self) -> f64 {
        self.warmup_s
            .unwrap_or_else(|| self.dcc.tau_sense_s.max(2.0 / self.fb_hz))
    }

    pub fn warmup_us(&self) -> Micros {
        (self.warmup() * 1e6).round() as Micros
    }

    pub fn sim_time_us(&self) -> Micros {
        (self.sim_time_s * 1e6).round() as Micros
    }

    /// Beacon period in microseconds. LTE periods are whole subframes.
    pub fn period_us(&self) -> Micros {
        match self.technology {
            Technology::Ieee80211pStar => (1e6 / self.fb_hz).round() as Micros,
            Technology::LteV2x => self.period_subframes() * 1000,
        }
    }

    pub fn period_subframes(&self) -> u64 {
        ((1000.0 / self.fb_hz).round() as u64).max(1)
    }

    pub fn channel_occupancy(&self) -> f64 {
        channel_occupancy(&self.mcs_profile(), self.technology, self.fb_hz)
    }

    /// Checks every field; returns soft warnings on success.
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        let mut warnings = Vec::new();
        if self.payload_bytes != PAYLOAD_BYTES {
            return Err(ConfigError::invalid(
                "payload_bytes",
                format!("only {PAYLOAD_BYTES} B beacons are supported; MCS airtimes are tabulated for that size"),
            ));
        }
        if !(self.rho_veh_per_km >= 0.0) || !self.rho_veh_per_km.is_finite() {
            return Err(ConfigError::invalid("rho_veh_per_km", "must be a non-negative number"));
        }
        if !(1.0..=10.0).contains(&self.fb_hz) {
            return Err(ConfigError::invalid("fb_hz", "must be between 1 and 10 Hz"));
        }
        if !self.pt_dbm.is_finite() {
            return Err(ConfigError::invalid("pt_dbm", "must be finite"));
        }
        if !(8.0..=23.0).contains(&self.pt_dbm) {
            warnings.push(format!("pt_dbm = {} is outside the usual 8..23 dBm range", self.pt_dbm));
        }
        if !(self.sim_time_s > 0.0) || !self.sim_time_s.is_finite() {
            return Err(ConfigError::invalid("sim_time_s", "must be positive"));
        }
        if let Some(w) = self.warmup_s {
            if !(w >= self.dcc.tau_sense_s) {
                return Err(ConfigError::invalid(
                    "warmup_s",
                    format!("must be at least the {} s sensing window", self.dcc.tau_sense_s),
                ));
            }
        }
        if self.warmup() >= self.sim_time_s {
            return Err(ConfigError::invalid("sim_time_s", "must exceed the warmup"));
        }
        if self.replications == 0 {
            return Err(ConfigError::invalid("replications", "must be at least 1"));
        }
        if !(self.road.length_m > 0.0) {
            return Err(ConfigError::invalid("road.length_m", "must be positive"));
        }
        self.propagation.validate()?;
        self.phy.validate()?;
        self.csma.validate()?;
        self.sps.validate()?;
        self.dcc.validate()?;
        self.metrics.validate()?;
        if self.technology == Technology::LteV2x && (1000.0 / self.fb_hz).fract() != 0.0 {
            warnings.push(format!(
                "LTE reservation period rounded to {} ms",
                self.period_subframes()
            ));
        }
        Ok(warnings)
    }
}

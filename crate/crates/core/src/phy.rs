//! MCS table and threshold reception shared by both access technologies.
//!
//! The 802.11p* abstraction keeps the 802.11p MAC timing but uses the
//! LTE-V2X minimum SINR and raw data rate, so the same four MCS rows serve
//! both stacks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// LTE transmission time interval.
pub const TTI_US: u64 = 1000;
/// The only payload the MCS airtimes are valid for.
pub const PAYLOAD_BYTES: u32 = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum McsId {
    A,
    B,
    C,
    D,
}

impl McsId {
    pub const ALL: [McsId; 4] = [McsId::A, McsId::B, McsId::C, McsId::D];
}

impl fmt::Display for McsId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            McsId::A => "A",
            McsId::B => "B",
            McsId::C => "C",
            McsId::D => "D",
        };
        f.write_str(s)
    }
}

impl FromStr for McsId {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(McsId::A),
            "B" => Ok(McsId::B),
            "C" => Ok(McsId::C),
            "D" => Ok(McsId::D),
            _ => Err(ConfigError::invalid("mcs", format!("unknown MCS {s:?}, expected A-D"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Technology {
    /// 802.11p MAC with the LTE-equalized PHY.
    #[serde(rename = "ieee80211p")]
    Ieee80211pStar,
    #[serde(rename = "ltev2x")]
    LteV2x,
}

impl Technology {
    pub const ALL: [Technology; 2] = [Technology::Ieee80211pStar, Technology::LteV2x];

    pub fn as_str(self) -> &'static str {
        match self {
            Technology::Ieee80211pStar => "ieee80211p",
            Technology::LteV2x => "ltev2x",
        }
    }
}

impl fmt::Display for Technology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Technology {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ieee80211p" | "80211p" | "11p" | "ieee80211p*" => Ok(Technology::Ieee80211pStar),
            "ltev2x" | "lte" | "lte-v2x" => Ok(Technology::LteV2x),
            _ => Err(ConfigError::invalid(
                "technology",
                format!("unknown technology {s:?}, expected ieee80211p or ltev2x"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McsProfile {
    pub id: McsId,
    pub label: &'static str,
    pub min_sinr_db: f64,
    /// Airtime of a 300-byte beacon in 802.11p*, preamble included.
    pub airtime_11p_us: u64,
    /// 300-byte packets that fit one LTE subframe.
    pub packets_per_tti: u32,
}

const MCS_TABLE: [McsProfile; 4] = [
    McsProfile {
        id: McsId::A,
        label: "QPSK, 0.27",
        min_sinr_db: 1.49,
        airtime_11p_us: 560,
        packets_per_tti: 1,
    },
    McsProfile {
        id: McsId::B,
        label: "QPSK, 0.48",
        min_sinr_db: 5.79,
        airtime_11p_us: 304,
        packets_per_tti: 2,
    },
    McsProfile {
        id: McsId::C,
        label: "16QAM, 0.46",
        min_sinr_db: 12.83,
        airtime_11p_us: 192,
        packets_per_tti: 3,
    },
    McsProfile {
        id: McsId::D,
        label: "16QAM, 0.59",
        min_sinr_db: 16.39,
        airtime_11p_us: 160,
        packets_per_tti: 4,
    },
];

pub fn mcs_profile(id: McsId) -> McsProfile {
    MCS_TABLE[id as usize]
}

pub fn mcs_table() -> &'static [McsProfile; 4] {
    &MCS_TABLE
}

/// Threshold reception; a SINR equal to the threshold decodes.
#[inline]
pub fn decode(sinr_db: f64, mcs: &McsProfile) -> bool {
    sinr_db >= mcs.min_sinr_db
}

pub fn airtime_us(mcs: &McsProfile, tech: Technology) -> u64 {
    match tech {
        Technology::Ieee80211pStar => mcs.airtime_11p_us,
        Technology::LteV2x => TTI_US,
    }
}

/// How interference that changes during a packet is folded into one SINR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SinrPolicy {
    /// Minimum SINR over the overlap intervals.
    #[default]
    Worst,
    /// SINR against the time-averaged interference power.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhyConfig {
    pub channel_bandwidth_mhz: f64,
    pub sinr_policy: SinrPolicy,
}

impl Default for PhyConfig {
    fn default() -> Self {
        Self {
            channel_bandwidth_mhz: 10.0,
            sinr_policy: SinrPolicy::Worst,
        }
    }
}

impl PhyConfig {
    /// Bandwidth the receiver integrates noise over for one packet.
    pub fn noise_bandwidth_hz(&self, mcs: &McsProfile, tech: Technology) -> f64 {
        let full = self.channel_bandwidth_mhz * 1e6;
        match tech {
            Technology::Ieee80211pStar => full,
            Technology::LteV2x => full / mcs.packets_per_tti as f64,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.channel_bandwidth_mhz > 0.0) {
            return Err(ConfigError::invalid("phy.channel_bandwidth_mhz", "bandwidth must be positive"));
        }
        Ok(())
    }
}

/// The MCS table as a fixed-width text table.
pub fn render_mcs_table() -> String {
    let mut s = String::from("MCS  Mod./Coding   Min SINR   Duration 802.11p*   Packets/TTI LTE-V2X\n");
    for m in mcs_table() {
        s.push_str(&format!(
            "{:<4} {:<13} {:>5.2} dB   {:>6} us           {}\n",
            m.id.to_string(),
            m.label,
            m.min_sinr_db,
            m.airtime_11p_us,
            m.packets_per_tti
        ));
    }
    s
}

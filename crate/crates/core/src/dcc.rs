//! Channel busy ratio, channel occupancy ratio and neighbor awareness.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, SimError};
use crate::phy::{mcs_profile, McsId, McsProfile, PhyConfig, Technology, TTI_US};
use crate::propagation::{max_distance_for_loss, noise_dbm, PropagationConfig};
use crate::scenario::{RoadGeometry, VehicleId};
use crate::transmission::Micros;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DccConfig {
    pub tau_sense_s: f64,
    pub cbr_update_ms: u64,
    pub awareness_range_m: f64,
    /// Neighbor entries expire after this many beacon periods without a
    /// decoded beacon.
    pub neighbor_expiry_periods: f64,
}

impl Default for DccConfig {
    fn default() -> Self {
        Self {
            tau_sense_s: 1.0,
            cbr_update_ms: 100,
            awareness_range_m: 100.0,
            neighbor_expiry_periods: 5.0,
        }
    }
}

impl DccConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.tau_sense_s > 0.0) {
            return Err(ConfigError::invalid("dcc.tau_sense_s", "must be positive"));
        }
        if self.cbr_update_ms == 0 {
            return Err(ConfigError::invalid("dcc.cbr_update_ms", "must be positive"));
        }
        let tau_ms = self.tau_sense_s * 1000.0;
        if tau_ms.fract() != 0.0 || (tau_ms as u64) % self.cbr_update_ms != 0 {
            return Err(ConfigError::invalid(
                "dcc.cbr_update_ms",
                "the sensing window must be a whole number of updates",
            ));
        }
        if !(self.awareness_range_m > 0.0) {
            return Err(ConfigError::invalid("dcc.awareness_range_m", "must be positive"));
        }
        if !(self.neighbor_expiry_periods > 0.0) {
            return Err(ConfigError::invalid("dcc.neighbor_expiry_periods", "must be positive"));
        }
        Ok(())
    }

    pub fn tau_sense_us(&self) -> Micros {
        (self.tau_sense_s * 1e6).round() as Micros
    }
}

/// Inputs of one CBR evaluation; the 802.11p* and LTE fields are
/// independent and only one set is populated.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CbrWindow {
    pub tau_sense_us: Micros,
    pub elapsed_us: Micros,
    pub busy_time_us: Micros,
    pub own_tx_time_us: Micros,
    pub busy_slot_count: u64,
    pub own_tx_subframes: u64,
    pub window_subframes: u64,
    pub required_subframes: u64,
    pub slots_per_subframe: u32,
}

impl CbrWindow {
    pub fn ieee(busy_time_us: Micros, own_tx_time_us: Micros, elapsed_us: Micros, tau_sense_us: Micros) -> Self {
        Self {
            tau_sense_us,
            elapsed_us,
            busy_time_us,
            own_tx_time_us,
            ..Default::default()
        }
    }

    pub fn lte(busy_slots: u64, own_tx_subframes: u64, recorded: u64, required: u64, m: u32) -> Self {
        Self {
            busy_slot_count: busy_slots,
            own_tx_subframes,
            window_subframes: recorded,
            required_subframes: required,
            slots_per_subframe: m,
            ..Default::default()
        }
    }
}

/// `(T_busy + T_tx) / τ_sense`.
pub fn cbr_11p(w: &CbrWindow) -> Result<f64, SimError> {
    if w.tau_sense_us == 0 || w.elapsed_us < w.tau_sense_us {
        return Err(SimError::NotReady("cbr"));
    }
    Ok(((w.busy_time_us + w.own_tx_time_us) as f64 / w.tau_sense_us as f64).min(1.0))
}

/// `(N_busy + S_tx·M) / (S_sense·M)`.
pub fn cbr_lte(w: &CbrWindow) -> Result<f64, SimError> {
    if w.window_subframes == 0 || w.window_subframes < w.required_subframes || w.slots_per_subframe == 0 {
        return Err(SimError::NotReady("cbr"));
    }
    let m = w.slots_per_subframe as u64;
    Ok(((w.busy_slot_count + w.own_tx_subframes * m) as f64 / (w.window_subframes * m) as f64).min(1.0))
}

/// `τ_p · f_b`.
pub fn cr_11p(airtime_us: Micros, fb_hz: f64) -> f64 {
    airtime_us as f64 * fb_hz / 1e6
}

/// `(B_tx / M) · τ_TTI · f_b`.
pub fn cr_lte(subchannels_per_packet: u32, m_tot: u32, fb_hz: f64) -> Result<f64, ConfigError> {
    if subchannels_per_packet == 0 || subchannels_per_packet > m_tot {
        return Err(ConfigError::invalid("cr", "need 1 <= subchannels_per_packet <= m_tot"));
    }
    Ok(subchannels_per_packet as f64 * TTI_US as f64 * fb_hz / (m_tot as f64 * 1e6))
}

/// CR of one beacon stream. Each LTE packet uses one slot.
pub fn channel_occupancy(mcs: &McsProfile, tech: Technology, fb_hz: f64) -> f64 {
    match tech {
        Technology::Ieee80211pStar => cr_11p(mcs.airtime_11p_us, fb_hz),
        Technology::LteV2x => cr_lte(1, mcs.packets_per_tti, fb_hz).unwrap_or(f64::NAN),
    }
}

/// One row of the CR table: a setting and the CR of both stacks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OccupancyRow {
    pub mcs: McsId,
    pub fb_hz: f64,
    pub cr_11p: f64,
    pub cr_lte: f64,
}

/// Settings of the CR table, in its row order.
pub const OCCUPANCY_SETTINGS: [(McsId, f64); 6] = [
    (McsId::A, 10.0),
    (McsId::B, 10.0),
    (McsId::C, 10.0),
    (McsId::D, 10.0),
    (McsId::B, 5.0),
    (McsId::B, 1.0),
];

pub fn occupancy_table() -> Vec<OccupancyRow> {
    OCCUPANCY_SETTINGS
        .iter()
        .map(|&(id, fb_hz)| {
            let mcs = mcs_profile(id);
            OccupancyRow {
                mcs: id,
                fb_hz,
                cr_11p: channel_occupancy(&mcs, Technology::Ieee80211pStar, fb_hz),
                cr_lte: channel_occupancy(&mcs, Technology::LteV2x, fb_hz),
            }
        })
        .collect()
}

/// Integrates the time a boolean condition holds.
#[derive(Debug, Clone, Copy, Default)]
pub struct BusyTimer {
    total_us: Micros,
    since: Option<Micros>,
}

impl BusyTimer {
    pub fn set(&mut self, t: Micros, on: bool) {
        match (self.since, on) {
            (None, true) => self.since = Some(t),
            (Some(s), false) => {
                self.total_us += t - s;
                self.since = None;
            }
            _ => {}
        }
    }

    pub fn is_on(&self) -> bool {
        self.since.is_some()
    }

    pub fn total_at(&self, t: Micros) -> Micros {
        self.total_us + self.since.map_or(0, |s| t.saturating_sub(s))
    }
}

/// Cumulative counters snapshotted at each CBR update, giving sliding
/// window differences.
#[derive(Debug, Clone)]
pub struct SnapshotRing {
    values: Vec<(Micros, Micros)>,
    head: usize,
    len: usize,
}

impl SnapshotRing {
    /// Keeps `updates_per_window + 1` snapshots.
    pub fn new(updates_per_window: usize) -> Self {
        Self {
            values: vec![(0, 0); updates_per_window + 1],
            head: 0,
            len: 0,
        }
    }

    pub fn push(&mut self, v: (Micros, Micros)) {
        self.values[self.head] = v;
        self.head = (self.head + 1) % self.values.len();
        self.len = (self.len + 1).min(self.values.len());
    }

    /// Newest minus oldest, once the ring spans a whole window.
    pub fn window_delta(&self) -> Option<(Micros, Micros)> {
        if self.len < self.values.len() {
            return None;
        }
        let newest = self.values[(self.head + self.values.len() - 1) % self.values.len()];
        let oldest = self.values[self.head];
        Some((newest.0 - oldest.0, newest.1 - oldest.1))
    }
}

#[derive(Debug, Clone)]
pub struct NeighborTable {
    entries: Vec<Option<(f64, Micros)>>,
    pub awareness_range_m: f64,
    pub expiry_us: Micros,
}

impl NeighborTable {
    pub fn new(vehicles: usize, awareness_range_m: f64, expiry_us: Micros) -> Self {
        Self {
            entries: vec![None; vehicles],
            awareness_range_m,
            expiry_us,
        }
    }

    pub fn observe(&mut self, from: VehicleId, position_m: f64, t: Micros) {
        if let Some(e) = self.entries.get_mut(from.index()) {
            *e = Some((position_m, t));
        }
    }

    pub fn expire(&mut self, t: Micros) {
        let horizon = self.expiry_us;
        for e in self.entries.iter_mut() {
            if matches!(e, Some((_, seen)) if seen.saturating_add(horizon) < t) {
                *e = None;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.iter().flatten().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Live entries whose last position lies within the awareness range.
    pub fn count_at(&self, geometry: &RoadGeometry, self_position_m: f64, t: Micros) -> usize {
        self.entries
            .iter()
            .flatten()
            .filter(|(pos, seen)| {
                seen.saturating_add(self.expiry_us) >= t && geometry.distance(*pos, self_position_m) <= self.awareness_range_m
            })
            .count()
    }
}

/// Entries within the awareness range of `self_position_m`.
pub fn neighbor_count(table: &NeighborTable, geometry: &RoadGeometry, self_position_m: f64) -> usize {
    table
        .entries
        .iter()
        .flatten()
        .filter(|(pos, _)| geometry.distance(*pos, self_position_m) <= table.awareness_range_m)
        .count()
}

/// Largest distance at which the shadowing-free SNR still meets the MCS
/// threshold.
pub fn median_range_m(
    p_tx_dbm: f64,
    mcs: &McsProfile,
    prop: &PropagationConfig,
    phy: &PhyConfig,
    tech: Technology,
) -> f64 {
    let noise = noise_dbm(phy.noise_bandwidth_hz(mcs, tech), prop);
    let budget = p_tx_dbm + prop.antenna_gains_db() - noise - mcs.min_sinr_db;
    max_distance_for_loss(budget, prop)
}

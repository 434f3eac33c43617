use serde::{Deserialize, Serialize};

use crate::phy::{McsId, TTI_US};
use crate::scenario::VehicleId;

/// Time in microseconds since the start of a replication.
pub type Micros = u64;

/// Where a transmission sits on the medium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Airtime {
    /// Contiguous 802.11p* transmission.
    Duration { us: Micros },
    /// One slot of one LTE subframe.
    Slot { subframe: u64, slot: u32 },
}

/// One beacon on air.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmissionEvent {
    pub tx_id: VehicleId,
    pub t_start: Micros,
    pub airtime: Airtime,
    pub power_dbm: f64,
    pub mcs: McsId,
    pub beacon_seq: u64,
    pub generation_time: Micros,
}

impl TransmissionEvent {
    pub fn t_end(&self) -> Micros {
        match self.airtime {
            Airtime::Duration { us } => self.t_start + us,
            Airtime::Slot { .. } => self.t_start + TTI_US,
        }
    }

    pub fn duration(&self) -> Micros {
        self.t_end() - self.t_start
    }

    pub fn is_active_at(&self, t: Micros) -> bool {
        self.t_start <= t && t < self.t_end()
    }

    pub fn overlaps(&self, other: &TransmissionEvent) -> bool {
        self.t_start < other.t_end() && other.t_start < self.t_end()
    }

    /// Whether the two transmissions share spectrum while overlapping in time.
    pub fn interferes_with(&self, other: &TransmissionEvent) -> bool {
        if !self.overlaps(other) {
            return false;
        }
        match (self.airtime, other.airtime) {
            (Airtime::Slot { slot: a, .. }, Airtime::Slot { slot: b, .. }) => a == b,
            _ => true,
        }
    }
}

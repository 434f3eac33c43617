//! Highway vehicle drops.
//!
//! A drop is a 1-D Poisson point process on a road segment of fixed length.
//! Positions are static for the whole replication; independent replications
//! use independent drops.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, SimError};

/// Index of a vehicle in its scenario. Vehicles are numbered in ascending
/// position order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VehicleId(pub usize);

impl VehicleId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

/// Road length and border handling, shared by everything that measures
/// distances along the road.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadGeometry {
    pub length_m: f64,
    pub wraparound: bool,
}

impl RoadGeometry {
    /// Distance between two coordinates on this road.
    #[inline]
    pub fn distance(&self, a: f64, b: f64) -> f64 {
        let d = (a - b).abs();
        if self.wraparound {
            d.min(self.length_m - d)
        } else {
            d
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadScenario {
    pub geometry: RoadGeometry,
    /// Sorted ascending; `positions[i]` belongs to `VehicleId(i)`.
    pub positions: Vec<f64>,
    pub density_veh_per_km: f64,
}

impl RoadScenario {
    /// Builds a scenario from explicit coordinates (regression fixtures).
    pub fn from_positions(
        mut positions: Vec<f64>,
        length_m: f64,
        wraparound: bool,
    ) -> Result<Self, ConfigError> {
        check_length(length_m)?;
        if let Some(p) = positions
            .iter()
            .find(|p| !p.is_finite() || **p < 0.0 || **p >= length_m)
        {
            return Err(ConfigError::invalid(
                "positions",
                format!("coordinate {p} outside [0, {length_m})"),
            ));
        }
        positions.sort_by(f64::total_cmp);
        let density = positions.len() as f64 * 1000.0 / length_m;
        Ok(Self {
            geometry: RoadGeometry {
                length_m,
                wraparound,
            },
            positions,
            density_veh_per_km: density,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn length_m(&self) -> f64 {
        self.geometry.length_m
    }

    pub fn position(&self, id: VehicleId) -> Result<f64, SimError> {
        self.positions
            .get(id.0)
            .copied()
            .ok_or(SimError::UnknownVehicle(id.0))
    }

    pub fn distance(&self, a: VehicleId, b: VehicleId) -> Result<f64, SimError> {
        Ok(self.geometry.distance(self.position(a)?, self.position(b)?))
    }

    /// Unchecked distance by index for hot loops.
    #[inline]
    pub(crate) fn distance_idx(&self, a: usize, b: usize) -> f64 {
        self.geometry.distance(self.positions[a], self.positions[b])
    }

    pub fn ids(&self) -> impl Iterator<Item = VehicleId> {
        (0..self.len()).map(VehicleId)
    }
}

fn check_length(length_m: f64) -> Result<(), ConfigError> {
    if !(length_m.is_finite() && length_m > 0.0) {
        return Err(ConfigError::invalid(
            "road.length_m",
            format!("road length must be positive, got {length_m}"),
        ));
    }
    Ok(())
}

/// Draws a Poisson drop with intensity `density_veh_per_km` on `length_m`.
pub fn generate_drop<R: Rng + ?Sized>(
    density_veh_per_km: f64,
    length_m: f64,
    wraparound: bool,
    rng: &mut R,
) -> Result<RoadScenario, ConfigError> {
    check_length(length_m)?;
    if !(density_veh_per_km.is_finite() && density_veh_per_km >= 0.0) {
        return Err(ConfigError::invalid(
            "rho_veh_per_km",
            format!("density must be non-negative, got {density_veh_per_km}"),
        ));
    }
    let mean = density_veh_per_km * length_m / 1000.0;
    let count = if mean > 0.0 {
        let poisson = Poisson::new(mean).map_err(|e| ConfigError::invalid("rho_veh_per_km", e.to_string()))?;
        poisson.sample(rng) as usize
    } else {
        0
    };
    let mut positions: Vec<f64> = (0..count).map(|_| rng.random::<f64>() * length_m).collect();
    positions.sort_by(f64::total_cmp);
    Ok(RoadScenario {
        geometry: RoadGeometry {
            length_m,
            wraparound,
        },
        positions,
        density_veh_per_km,
    })
}

/// Reads one coordinate per line (meters). Blank lines and `#` comments are
/// skipped.
pub fn load_positions(path: &Path) -> Result<Vec<f64>, ConfigError> {
    let err = |reason: String| ConfigError::Positions {
        path: path.display().to_string(),
        reason,
    };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| err(format!("line {}: not a number: {line:?}", lineno + 1)))?;
        out.push(v);
    }
    Ok(out)
}

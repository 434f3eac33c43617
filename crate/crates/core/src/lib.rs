//! Discrete-event simulation of highway V2X beaconing over 802.11p* and
//! LTE-V2X Mode 4, with the DCC metrics and reliability statistics used to
//! compare the two.

pub mod csma;
pub mod dcc;
pub mod engine;
pub mod error;
pub mod phy;
pub mod propagation;
pub mod scenario;
pub mod sps;
pub mod transmission;

pub use error::{ConfigError, SimError};
pub use phy::{McsId, McsProfile, Technology};
pub use scenario::{RoadScenario, VehicleId};
pub use transmission::{Micros, TransmissionEvent};

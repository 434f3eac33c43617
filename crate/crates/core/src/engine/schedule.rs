use rand::Rng;

use crate::transmission::Micros;

/// Periodic generation times with a random initial phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeaconSchedule {
    pub phase_us: Micros,
    pub period_us: Micros,
}

impl BeaconSchedule {
    pub fn draw<R: Rng + ?Sized>(period_us: Micros, rng: &mut R) -> Self {
        Self {
            phase_us: rng.random_range(0..period_us),
            period_us,
        }
    }

    pub fn nth(&self, k: u64) -> Micros {
        self.phase_us + k * self.period_us
    }

    pub fn iter(&self) -> impl Iterator<Item = Micros> + '_ {
        (0..).map(|k| self.nth(k))
    }
}

/// Generation-time stream for one node at rate `fb_hz`.
pub fn beacon_schedule<R: Rng + ?Sized>(fb_hz: f64, rng: &mut R) -> BeaconSchedule {
    BeaconSchedule::draw((1e6 / fb_hz).round() as Micros, rng)
}

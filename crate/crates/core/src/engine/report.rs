//! Accumulated reliability and DCC statistics.
//!
//! Everything is kept as exact integer counts so that merging reports is
//! associative and independent of order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::scenario::VehicleId;
use crate::transmission::Micros;

use super::config::{MetricsConfig, SimConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PdrHistogram {
    pub bin_width_m: u32,
    pub successes: Vec<u64>,
    pub opportunities: Vec<u64>,
}

impl PdrHistogram {
    pub fn new(bin_width_m: u32, bins: usize) -> Self {
        Self {
            bin_width_m,
            successes: vec![0; bins],
            opportunities: vec![0; bins],
        }
    }

    pub fn bins(&self) -> usize {
        self.opportunities.len()
    }

    pub fn max_distance_m(&self) -> f64 {
        (self.bin_width_m as usize * self.bins()) as f64
    }

    pub fn bin_of(&self, distance_m: f64) -> Option<usize> {
        let b = (distance_m / self.bin_width_m as f64).floor();
        (b >= 0.0 && (b as usize) < self.bins()).then_some(b as usize)
    }

    pub fn bin_center_m(&self, bin: usize) -> f64 {
        (bin as f64 + 0.5) * self.bin_width_m as f64
    }

    pub fn pdr(&self, bin: usize) -> Option<f64> {
        let n = self.opportunities[bin];
        (n > 0).then(|| self.successes[bin] as f64 / n as f64)
    }

    pub fn curve(&self) -> Vec<(f64, Option<f64>)> {
        (0..self.bins()).map(|b| (self.bin_center_m(b), self.pdr(b))).collect()
    }

    /// Largest distance whose PDR is still at least `level`, interpolating
    /// linearly between bin centers at the first bin that falls below it.
    pub fn range_at(&self, level: f64) -> Option<f64> {
        let mut prev: Option<(f64, f64)> = None;
        for b in 0..self.bins() {
            let Some(p) = self.pdr(b) else { continue };
            let c = self.bin_center_m(b);
            if p < level {
                return Some(match prev {
                    None => 0.0,
                    Some((pc, pp)) => pc + (pp - level) / (pp - p) * (c - pc),
                });
            }
            prev = Some((c, p));
        }
        prev.map(|(c, _)| c)
    }

    fn merge(&mut self, other: &PdrHistogram) -> Result<(), SimError> {
        if self.bin_width_m != other.bin_width_m || self.bins() != other.bins() {
            return Err(SimError::Merge("different distance bins"));
        }
        for b in 0..self.bins() {
            self.successes[b] += other.successes[b];
            self.opportunities[b] += other.opportunities[b];
        }
        Ok(())
    }
}

/// Exact distribution of durations in microseconds.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DurationHistogram {
    pub counts: BTreeMap<Micros, u64>,
}

impl DurationHistogram {
    pub fn add(&mut self, us: Micros) {
        *self.counts.entry(us).or_insert(0) += 1;
    }

    pub fn len(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn min(&self) -> Option<Micros> {
        self.counts.keys().next().copied()
    }

    pub fn mean_us(&self) -> Option<f64> {
        let n = self.len();
        (n > 0).then(|| self.counts.iter().map(|(&k, &c)| k as f64 * c as f64).sum::<f64>() / n as f64)
    }

    /// Nearest-rank quantile.
    pub fn quantile(&self, q: f64) -> Option<Micros> {
        let n = self.len();
        if n == 0 {
            return None;
        }
        let rank = ((q * n as f64).ceil() as u64).clamp(1, n);
        let mut seen = 0;
        for (&k, &c) in &self.counts {
            seen += c;
            if seen >= rank {
                return Some(k);
            }
        }
        self.counts.keys().next_back().copied()
    }

    /// `(x, P[X > x])` at each distinct sample value.
    pub fn ccdf(&self) -> Vec<(Micros, f64)> {
        let n = self.len() as f64;
        let mut above = self.len();
        self.counts
            .iter()
            .map(|(&k, &c)| {
                above -= c;
                (k, above as f64 / n)
            })
            .collect()
    }

    fn merge(&mut self, other: &DurationHistogram) {
        for (&k, &c) in &other.counts {
            *self.counts.entry(k).or_insert(0) += c;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReceptionAccounting {
    pub received: u64,
    pub lost_sinr: u64,
    pub lost_half_duplex: u64,
    pub lost_expiry: u64,
}

impl ReceptionAccounting {
    pub fn total(&self) -> u64 {
        self.received + self.lost_sinr + self.lost_half_duplex + self.lost_expiry
    }

    fn merge(&mut self, o: &ReceptionAccounting) {
        self.received += o.received;
        self.lost_sinr += o.lost_sinr;
        self.lost_half_duplex += o.lost_half_duplex;
        self.lost_expiry += o.lost_expiry;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Received,
    LostSinr,
    LostHalfDuplex,
    LostExpiry,
}

/// Sum of ratio numerators and denominators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RatioSum {
    pub numerator: u64,
    pub denominator: u64,
    pub samples: u64,
}

impl RatioSum {
    pub fn add(&mut self, num: u64, den: u64) {
        self.numerator += num;
        self.denominator += den;
        self.samples += 1;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.denominator > 0).then(|| self.numerator as f64 / self.denominator as f64)
    }

    fn merge(&mut self, o: &RatioSum) {
        self.numerator += o.numerator;
        self.denominator += o.denominator;
        self.samples += o.samples;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub replications: u32,
    pub vehicles: u64,
    pub beacons_generated: u64,
    pub beacons_transmitted: u64,
    pub beacons_expired: u64,
    pub pdr_by_distance: PdrHistogram,
    pub within_range_successes: u64,
    pub within_range_opportunities: u64,
    pub ipg: DurationHistogram,
    pub access_delay: DurationHistogram,
    pub accounting: ReceptionAccounting,
    pub cbr: RatioSum,
    /// Neighbor count samples: numerator is the summed count.
    pub neighbors: RatioSum,
    pub cr: f64,
    pub config_echo: SimConfig,
}

impl MetricsReport {
    pub fn empty(config: &SimConfig) -> Self {
        let m = &config.metrics;
        Self {
            replications: 0,
            vehicles: 0,
            beacons_generated: 0,
            beacons_transmitted: 0,
            beacons_expired: 0,
            pdr_by_distance: PdrHistogram::new(m.bin_width_m, m.bins()),
            within_range_successes: 0,
            within_range_opportunities: 0,
            ipg: DurationHistogram::default(),
            access_delay: DurationHistogram::default(),
            accounting: ReceptionAccounting::default(),
            cbr: RatioSum::default(),
            neighbors: RatioSum::default(),
            cr: config.channel_occupancy(),
            config_echo: config.clone(),
        }
    }

    pub fn pdr_within_100m(&self) -> Option<f64> {
        (self.within_range_opportunities > 0)
            .then(|| self.within_range_successes as f64 / self.within_range_opportunities as f64)
    }

    pub fn range_pdr90_m(&self) -> Option<f64> {
        self.pdr_by_distance.range_at(0.9)
    }

    pub fn ipg_p999_s(&self) -> Option<f64> {
        self.ipg.quantile(0.999).map(|us| us as f64 / 1e6)
    }

    pub fn cbr_mean(&self) -> Option<f64> {
        self.cbr.mean()
    }

    pub fn neighbor_mean(&self) -> Option<f64> {
        (self.neighbors.samples > 0).then(|| self.neighbors.numerator as f64 / self.neighbors.samples as f64)
    }

    /// Pools two reports of the same configuration.
    pub fn merge(&mut self, other: &MetricsReport) -> Result<(), SimError> {
        self.pdr_by_distance.merge(&other.pdr_by_distance)?;
        self.replications += other.replications;
        self.vehicles += other.vehicles;
        self.beacons_generated += other.beacons_generated;
        self.beacons_transmitted += other.beacons_transmitted;
        self.beacons_expired += other.beacons_expired;
        self.within_range_successes += other.within_range_successes;
        self.within_range_opportunities += other.within_range_opportunities;
        self.ipg.merge(&other.ipg);
        self.access_delay.merge(&other.access_delay);
        self.accounting.merge(&other.accounting);
        self.cbr.merge(&other.cbr);
        self.neighbors.merge(&other.neighbors);
        Ok(())
    }
}

/// Turns adjudicated receptions into a report. Owns the per-pair history
/// needed for inter-packet gaps.
#[derive(Debug, Clone)]
pub struct Collector {
    report: MetricsReport,
    n: usize,
    last_rx_gen: Vec<Micros>,
    awareness_range_m: f64,
}

impl Collector {
    pub fn new(config: &SimConfig, vehicles: usize) -> Self {
        let mut report = MetricsReport::empty(config);
        report.replications = 1;
        report.vehicles = vehicles as u64;
        Self {
            report,
            n: vehicles,
            last_rx_gen: vec![Micros::MAX; vehicles * vehicles],
            awareness_range_m: config.metrics.awareness_range_m,
        }
    }

    pub fn metrics(&self) -> &MetricsConfig {
        &self.report.config_echo.metrics
    }

    pub fn bin_of(&self, distance_m: f64) -> Option<usize> {
        self.report.pdr_by_distance.bin_of(distance_m)
    }

    pub fn within_range(&self, distance_m: f64) -> bool {
        distance_m <= self.awareness_range_m
    }

    /// Records one (beacon, receiver) outcome. `generated_at` is the
    /// generation time of the beacon.
    pub fn collect(&mut self, rx: VehicleId, tx: VehicleId, generated_at: Micros, distance_m: f64, outcome: Outcome) {
        let Some(bin) = self.bin_of(distance_m) else { return };
        let near = self.within_range(distance_m);
        self.record_bulk(bin, near, outcome, 1);
        if outcome == Outcome::Received && near {
            let slot = &mut self.last_rx_gen[tx.index() * self.n + rx.index()];
            if *slot != Micros::MAX {
                self.report.ipg.add(generated_at - *slot);
            }
            *slot = generated_at;
        }
    }

    /// Records `count` identical outcomes in a bin, without IPG history.
    pub fn record_bulk(&mut self, bin: usize, near: bool, outcome: Outcome, count: u64) {
        let r = &mut self.report;
        r.pdr_by_distance.opportunities[bin] += count;
        if near {
            r.within_range_opportunities += count;
        }
        match outcome {
            Outcome::Received => {
                r.pdr_by_distance.successes[bin] += count;
                if near {
                    r.within_range_successes += count;
                }
                r.accounting.received += count;
            }
            Outcome::LostSinr => r.accounting.lost_sinr += count,
            Outcome::LostHalfDuplex => r.accounting.lost_half_duplex += count,
            Outcome::LostExpiry => r.accounting.lost_expiry += count,
        }
    }

    pub fn beacon_generated(&mut self) {
        self.report.beacons_generated += 1;
    }

    pub fn beacon_transmitted(&mut self, access_delay_us: Micros) {
        self.report.beacons_transmitted += 1;
        self.report.access_delay.add(access_delay_us);
    }

    pub fn beacon_expired(&mut self) {
        self.report.beacons_expired += 1;
    }

    pub fn cbr_sample(&mut self, num: u64, den: u64) {
        self.report.cbr.add(num, den);
    }

    pub fn neighbor_sample(&mut self, count: usize) {
        self.report.neighbors.add(count as u64, 1);
    }

    pub fn finish(self) -> MetricsReport {
        self.report
    }
}

//! Replication driver shared by both MACs.

mod config;
mod ieee;
mod lte;
mod reception;
mod report;
mod schedule;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

pub use config::{MetricsConfig, RoadConfig, SimConfig};
pub use reception::{adjudicate, adjudicate_reception, interference_mw, is_half_duplex};
pub use report::{
    Collector, DurationHistogram, MetricsReport, Outcome, PdrHistogram, RatioSum, ReceptionAccounting,
};
pub use schedule::{beacon_schedule, BeaconSchedule};

use crate::csma::CsmaPhase;
use crate::error::SimError;
use crate::phy::Technology;
use crate::propagation::{build_channel, dbm_to_mw, noise_dbm, ChannelRealization};
use crate::scenario::{generate_drop, load_positions, RoadScenario, VehicleId};
use crate::transmission::{Micros, TransmissionEvent};

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn combine(a: u64, b: u64) -> u64 {
    mix64(a ^ mix64(b))
}

/// Seed of the vehicle drop and its shadowing. Depends on the density so
/// that every other parameter can be compared on the same drops.
pub fn drop_seed(master: u64, replication: u32, rho_veh_per_km: f64) -> u64 {
    combine(combine(combine(master, 0xd50b), replication as u64), rho_veh_per_km.to_bits())
}

/// Seed of beacon phases, backoffs and resource selection.
pub fn mac_seed(master: u64, replication: u32) -> u64 {
    combine(combine(master, 0x3ac), replication as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForcedReservation {
    pub node: VehicleId,
    pub phase: u64,
    pub slot: u32,
    pub rc: u32,
}

/// Knobs that do not change the simulated system.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the random drop.
    pub positions: Option<Vec<f64>>,
    pub record_log: bool,
    pub trace_mac: bool,
    pub trace_dcc: bool,
    /// First LTE reservation of the given nodes.
    pub forced_reservations: Vec<ForcedReservation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum MacTraceRow {
    Csma { time_us: Micros, node: usize, event: &'static str, phase: CsmaPhase },
    Sps { subframe: u64, node: usize, slot: u32, rc: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DccTraceRow {
    pub time_us: Micros,
    pub node: usize,
    pub cbr: f64,
    pub cr: f64,
    pub neighbors: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReceptionRecord {
    /// Index into `SimLog::transmissions`.
    pub tx_index: usize,
    pub rx: VehicleId,
    pub outcome: Outcome,
}

/// Everything that went on air, for offline cross-checks.
#[derive(Debug, Clone)]
pub struct SimLog {
    pub scenario: RoadScenario,
    pub channel: ChannelRealization,
    pub noise_mw: f64,
    pub transmissions: Vec<TransmissionEvent>,
    /// Only beacons generated inside the measurement interval.
    pub receptions: Vec<ReceptionRecord>,
    pub measured: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct ReplicationOutput {
    pub report: MetricsReport,
    pub log: Option<SimLog>,
    pub mac_trace: Vec<MacTraceRow>,
    pub dcc_trace: Vec<DccTraceRow>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Link {
    pub rx: u32,
    pub distance_m: f64,
}

/// Static per-drop quantities shared by the MAC loops.
pub(crate) struct World {
    pub n: usize,
    pub scenario: RoadScenario,
    pub channel: ChannelRealization,
    /// Received power in mW, `[tx * n + rx]`.
    pub rx_mw: Vec<f64>,
    pub noise_mw: f64,
    /// Receivers that decode each transmitter in the absence of
    /// interference.
    pub links: Vec<Vec<Link>>,
    /// Per transmitter: `(bin, near, count)` of in-range receivers that
    /// cannot decode even without interference.
    pub weak: Vec<Vec<(usize, bool, u64)>>,
    /// Per transmitter: `(bin, near, count)` of all in-range receivers.
    pub all: Vec<Vec<(usize, bool, u64)>>,
}

fn tally(map: &mut Vec<(usize, bool, u64)>, bin: usize, near: bool) {
    match map.iter_mut().find(|e| e.0 == bin && e.1 == near) {
        Some(e) => e.2 += 1,
        None => map.push((bin, near, 1)),
    }
}

impl World {
    fn build(cfg: &SimConfig, scenario: RoadScenario, channel_seed: u64, collector: &Collector) -> Self {
        let n = scenario.len();
        let channel = build_channel(&scenario, &cfg.propagation, channel_seed);
        let mcs = cfg.mcs_profile();
        let noise_db = noise_dbm(cfg.phy.noise_bandwidth_hz(&mcs, cfg.technology), &cfg.propagation);
        let mut rx_mw = vec![0.0; n * n];
        let mut links = vec![Vec::new(); n];
        let mut weak = vec![Vec::new(); n];
        let mut all = vec![Vec::new(); n];
        for a in 0..n {
            for r in 0..n {
                if a == r {
                    continue;
                }
                let p = cfg.pt_dbm + channel.gain_db(VehicleId(a), VehicleId(r));
                rx_mw[a * n + r] = dbm_to_mw(p);
                let d = scenario.distance_idx(a, r);
                let Some(bin) = collector.bin_of(d) else { continue };
                let near = collector.within_range(d);
                tally(&mut all[a], bin, near);
                if p - noise_db >= mcs.min_sinr_db {
                    links[a].push(Link { rx: r as u32, distance_m: d });
                } else {
                    tally(&mut weak[a], bin, near);
                }
            }
        }
        Self {
            n,
            scenario,
            channel,
            rx_mw,
            noise_mw: dbm_to_mw(noise_db),
            links,
            weak,
            all,
        }
    }

    #[inline]
    pub fn rx_mw(&self, tx: usize, rx: usize) -> f64 {
        self.rx_mw[tx * self.n + rx]
    }
}

pub(crate) fn lost_everywhere(collector: &mut Collector, counts: &[(usize, bool, u64)], outcome: Outcome) {
    for &(bin, near, c) in counts {
        collector.record_bulk(bin, near, outcome, c);
    }
}

fn scenario_for(cfg: &SimConfig, replication: u32, opts: &RunOptions) -> Result<RoadScenario, SimError> {
    let road = &cfg.road;
    if let Some(p) = &opts.positions {
        return Ok(RoadScenario::from_positions(p.clone(), road.length_m, road.wraparound)?);
    }
    if let Some(path) = &road.positions_file {
        let p = load_positions(path)?;
        return Ok(RoadScenario::from_positions(p, road.length_m, road.wraparound)?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(drop_seed(cfg.seed, replication, cfg.rho_veh_per_km));
    Ok(generate_drop(cfg.rho_veh_per_km, road.length_m, road.wraparound, &mut rng)?)
}

/// Runs one replication.
pub fn run_replication(cfg: &SimConfig, replication: u32, opts: &RunOptions) -> Result<ReplicationOutput, SimError> {
    cfg.validate()?;
    let scenario = scenario_for(cfg, replication, opts)?;
    let mut collector = Collector::new(cfg, scenario.len());
    let channel_seed = mix64(drop_seed(cfg.seed, replication, cfg.rho_veh_per_km));
    let world = World::build(cfg, scenario, channel_seed, &collector);
    let mut rng = ChaCha8Rng::seed_from_u64(mac_seed(cfg.seed, replication));
    let mut out = ReplicationOutput {
        report: MetricsReport::empty(cfg),
        log: opts.record_log.then(|| SimLog {
            scenario: world.scenario.clone(),
            channel: world.channel.clone(),
            noise_mw: world.noise_mw,
            transmissions: Vec::new(),
            receptions: Vec::new(),
            measured: Vec::new(),
        }),
        mac_trace: Vec::new(),
        dcc_trace: Vec::new(),
    };
    match cfg.technology {
        Technology::Ieee80211pStar => ieee::simulate(cfg, &world, opts, &mut rng, &mut collector, &mut out)?,
        Technology::LteV2x => lte::simulate(cfg, &world, opts, &mut rng, &mut collector, &mut out)?,
    }
    out.report = collector.finish();
    Ok(out)
}

/// Runs `config.replications` independent replications in parallel and
/// pools them.
pub fn run(config: &SimConfig) -> Result<MetricsReport, SimError> {
    run_replications(config, &RunOptions::default()).map(|(r, _)| r)
}

/// Like [`run`], also returning each replication's output.
pub fn run_replications(
    config: &SimConfig,
    opts: &RunOptions,
) -> Result<(MetricsReport, Vec<ReplicationOutput>), SimError> {
    config.validate()?;
    let outputs: Vec<ReplicationOutput> = (0..config.replications)
        .into_par_iter()
        .map(|rep| run_replication(config, rep, opts))
        .collect::<Result<_, _>>()?;
    let mut pooled = MetricsReport::empty(config);
    for o in &outputs {
        pooled.merge(&o.report)?;
    }
    Ok((pooled, outputs))
}

#[cfg(test)]
mod scenarios;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_separate_streams() {
        assert_ne!(mac_seed(1, 0), mac_seed(1, 1));
        assert_ne!(mac_seed(1, 0), mac_seed(2, 0));
        assert_ne!(drop_seed(1, 0, 100.0), drop_seed(1, 0, 200.0));
        assert_eq!(drop_seed(7, 3, 300.0), drop_seed(7, 3, 300.0));
        assert_ne!(drop_seed(1, 0, 100.0), mac_seed(1, 0));
    }
}

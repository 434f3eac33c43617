//! Event loop for 802.11p* CSMA/CA.
//!
//! Events at equal timestamps are handled by class: transmission ends,
//! beacon generation, MAC timers. Transmissions started by those timers go
//! on air together, then every node's carrier sense is refreshed and busy /
//! idle changes are delivered. Metric samples come last.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng;

use crate::csma::{self, CsmaAction, CsmaEvent, CsmaNodeState, QueuedBeacon, TimerKind};
use crate::dcc::{BusyTimer, NeighborTable, SnapshotRing};
use crate::error::SimError;
use crate::phy::{decode, SinrPolicy};
use crate::propagation::dbm_to_mw;
use crate::scenario::VehicleId;
use crate::transmission::{Airtime, Micros, TransmissionEvent};

use super::schedule::BeaconSchedule;
use super::{
    lost_everywhere, Collector, DccTraceRow, MacTraceRow, Outcome, ReceptionRecord, ReplicationOutput, RunOptions,
    SimConfig, World,
};

const TX_END: u8 = 0;
const BEACON: u8 = 1;
const TIMER: u8 = 2;
const SAMPLE: u8 = 3;

#[derive(Debug, Clone, Copy)]
struct Rx {
    link: u32,
    current: f64,
    worst: f64,
    integral: f64,
    since: Micros,
    half_duplex: bool,
}

#[derive(Debug)]
struct OnAir {
    event: TransmissionEvent,
    measured: bool,
    log_index: usize,
    receptions: Vec<Rx>,
}

struct Sim<'a, R: Rng> {
    cfg: &'a SimConfig,
    w: &'a World,
    rng: &'a mut R,
    col: &'a mut Collector,
    out: &'a mut ReplicationOutput,
    trace_mac: bool,
    trace_dcc: bool,
    heap: BinaryHeap<Reverse<(Micros, u8, u32, u64)>>,
    mac: Vec<CsmaNodeState>,
    schedules: Vec<BeaconSchedule>,
    next_beacon: Vec<u64>,
    on_air: Vec<Option<OnAir>>,
    free: Vec<usize>,
    active: Vec<usize>,
    /// Slot in `on_air` of each node's own transmission.
    transmitting: Vec<Option<usize>>,
    sensed_mw: Vec<f64>,
    occupied: Vec<BusyTimer>,
    snapshots: Vec<SnapshotRing>,
    neighbors: Vec<NeighborTable>,
    starting: Vec<(usize, QueuedBeacon)>,
    airtime_us: Micros,
    cs_threshold_mw: f64,
    warmup: Micros,
    end: Micros,
}

impl<R: Rng> Sim<'_, R> {
    fn measured(&self, generated_at: Micros) -> bool {
        generated_at >= self.warmup && generated_at < self.end
    }

    fn push(&mut self, t: Micros, class: u8, node: usize, aux: u64) {
        self.heap.push(Reverse((t, class, node as u32, aux)));
    }

    fn step(&mut self, t: Micros, node: usize, ev: CsmaEvent) -> Result<(), SimError> {
        let outcome = csma::step(&mut self.mac[node], ev, &self.cfg.csma, self.rng)?;
        if self.trace_mac {
            self.out.mac_trace.push(MacTraceRow::Csma {
                time_us: t,
                node,
                event: ev.name(),
                phase: self.mac[node].phase(),
            });
        }
        if let Some(old) = outcome.dropped {
            self.expire(node, old);
        }
        match outcome.action {
            Some(CsmaAction::StartTx(b)) => self.starting.push((node, b)),
            Some(CsmaAction::ScheduleTimer { kind, delay_us, epoch }) => {
                let k = match kind {
                    TimerKind::Aifs => 0,
                    TimerKind::Slot => 1,
                };
                self.push(t + delay_us, TIMER, node, epoch << 1 | k);
            }
            None => {}
        }
        Ok(())
    }

    fn expire(&mut self, node: usize, b: QueuedBeacon) {
        if self.measured(b.generated_at) {
            self.col.beacon_expired();
            lost_everywhere(self.col, &self.w.all[node], Outcome::LostExpiry);
        }
    }

    fn on_beacon(&mut self, t: Micros, node: usize) -> Result<(), SimError> {
        let seq = self.next_beacon[node];
        self.next_beacon[node] += 1;
        let next = self.schedules[node].nth(seq + 1);
        if next < self.end + self.schedules[node].period_us {
            self.push(next, BEACON, node, 0);
        }
        if self.measured(t) {
            self.col.beacon_generated();
        }
        self.step(t, node, CsmaEvent::BeaconReady(QueuedBeacon { seq, generated_at: t }))
    }

    fn on_timer(&mut self, t: Micros, node: usize, aux: u64) -> Result<(), SimError> {
        if !self.mac[node].timer_is_current(aux >> 1) {
            return Ok(());
        }
        let ev = if aux & 1 == 0 { CsmaEvent::AifsElapsed } else { CsmaEvent::SlotElapsed };
        self.step(t, node, ev)
    }

    fn integrate(rx: &mut Rx, t: Micros) {
        rx.integral += rx.current * (t - rx.since) as f64;
        rx.since = t;
    }

    fn on_tx_end(&mut self, t: Micros, slot: usize) -> Result<(), SimError> {
        let mut air = self.on_air[slot].take().expect("ended transmission is on air");
        self.free.push(slot);
        self.active.retain(|&s| s != slot);
        let a = air.event.tx_id.index();
        self.transmitting[a] = None;
        let mcs = self.cfg.mcs_profile();
        let duration = air.event.duration() as f64;
        for rx in air.receptions.iter_mut() {
            Self::integrate(rx, t);
            let link = self.w.links[a][rx.link as usize];
            let r = link.rx as usize;
            let outcome = if rx.half_duplex {
                Outcome::LostHalfDuplex
            } else {
                let interf = match self.cfg.phy.sinr_policy {
                    SinrPolicy::Worst => rx.worst,
                    SinrPolicy::Mean => rx.integral / duration,
                };
                let sinr = 10.0 * (self.w.rx_mw(a, r) / (self.w.noise_mw + interf)).log10();
                if decode(sinr, &mcs) {
                    Outcome::Received
                } else {
                    Outcome::LostSinr
                }
            };
            if outcome == Outcome::Received {
                self.neighbors[r].observe(air.event.tx_id, self.w.scenario.positions[a], t);
            }
            if air.measured {
                self.col.collect(VehicleId(r), air.event.tx_id, air.event.generation_time, link.distance_m, outcome);
                if let Some(log) = self.out.log.as_mut() {
                    log.receptions.push(ReceptionRecord { tx_index: air.log_index, rx: VehicleId(r), outcome });
                }
            }
        }
        if air.measured {
            lost_everywhere(self.col, &self.w.weak[a], Outcome::LostSinr);
        }
        self.step(t, a, CsmaEvent::TxComplete)
    }

    /// Puts pending transmissions on air and refreshes carrier sense.
    fn settle(&mut self, t: Micros, changed: bool) -> Result<(), SimError> {
        if !changed && self.starting.is_empty() {
            return Ok(());
        }
        let starting = std::mem::take(&mut self.starting);
        let power = self.cfg.pt_dbm;
        for (node, b) in starting {
            let event = TransmissionEvent {
                tx_id: VehicleId(node),
                t_start: t,
                airtime: Airtime::Duration { us: self.airtime_us },
                power_dbm: power,
                mcs: self.cfg.mcs,
                beacon_seq: b.seq,
                generation_time: b.generated_at,
            };
            let measured = self.measured(b.generated_at);
            if measured {
                self.col.beacon_transmitted(t - b.generated_at);
            }
            let mut log_index = 0;
            if let Some(log) = self.out.log.as_mut() {
                log_index = log.transmissions.len();
                log.transmissions.push(event);
                log.measured.push(measured);
            }
            let receptions = (0..self.w.links[node].len())
                .map(|i| Rx {
                    link: i as u32,
                    current: 0.0,
                    worst: 0.0,
                    integral: 0.0,
                    since: t,
                    half_duplex: false,
                })
                .collect();
            let slot = match self.free.pop() {
                Some(s) => s,
                None => {
                    self.on_air.push(None);
                    self.on_air.len() - 1
                }
            };
            self.on_air[slot] = Some(OnAir { event, measured, log_index, receptions });
            self.active.push(slot);
            self.transmitting[node] = Some(slot);
            self.push(t + self.airtime_us, TX_END, node, slot as u64);
        }

        let n = self.w.n;
        let txs: Vec<usize> = self
            .active
            .iter()
            .map(|&s| self.on_air[s].as_ref().unwrap().event.tx_id.index())
            .collect();
        for r in 0..n {
            self.sensed_mw[r] = txs.iter().filter(|&&a| a != r).map(|&a| self.w.rx_mw(a, r)).sum();
        }
        for &s in &self.active {
            let air = self.on_air[s].as_mut().unwrap();
            let a = air.event.tx_id.index();
            for rx in air.receptions.iter_mut() {
                let r = self.w.links[a][rx.link as usize].rx as usize;
                Self::integrate(rx, t);
                rx.current = (self.sensed_mw[r] - self.w.rx_mw(a, r)).max(0.0);
                rx.worst = rx.worst.max(rx.current);
                if self.transmitting[r].is_some() {
                    rx.half_duplex = true;
                }
            }
        }
        for r in 0..n {
            let busy = self.sensed_mw[r] >= self.cs_threshold_mw;
            self.occupied[r].set(t, busy || self.transmitting[r].is_some());
            if busy != self.mac[r].channel_busy() {
                let ev = if busy { CsmaEvent::ChannelBecomesBusy } else { CsmaEvent::ChannelBecomesIdle };
                self.step(t, r, ev)?;
            }
        }
        if !self.starting.is_empty() {
            return self.settle(t, true);
        }
        Ok(())
    }

    fn on_sample(&mut self, t: Micros) {
        let tau = self.cfg.dcc.tau_sense_us();
        let cr = self.cfg.channel_occupancy();
        for i in 0..self.w.n {
            self.snapshots[i].push((self.occupied[i].total_at(t), 0));
            if t < self.warmup || t >= self.end {
                continue;
            }
            let Some((occ, _)) = self.snapshots[i].window_delta() else { continue };
            let v = self.neighbors[i].count_at(&self.w.scenario.geometry, self.w.scenario.positions[i], t);
            self.col.cbr_sample(occ, tau);
            self.col.neighbor_sample(v);
            if self.trace_dcc {
                self.out.dcc_trace.push(DccTraceRow {
                    time_us: t,
                    node: i,
                    cbr: occ as f64 / tau as f64,
                    cr,
                    neighbors: v,
                });
            }
        }
    }
}

pub(crate) fn simulate<R: Rng>(
    cfg: &SimConfig,
    w: &World,
    opts: &RunOptions,
    rng: &mut R,
    col: &mut Collector,
    out: &mut ReplicationOutput,
) -> Result<(), SimError> {
    let n = w.n;
    let period = cfg.period_us();
    let update_us = cfg.dcc.cbr_update_ms * 1000;
    let updates = (cfg.dcc.tau_sense_us() / update_us) as usize;
    let expiry = (cfg.dcc.neighbor_expiry_periods * period as f64).round() as Micros;
    let schedules: Vec<BeaconSchedule> = (0..n).map(|_| BeaconSchedule::draw(period, rng)).collect();
    let mut sim = Sim {
        cfg,
        w,
        rng,
        col,
        out,
        trace_mac: opts.trace_mac,
        trace_dcc: opts.trace_dcc,
        heap: BinaryHeap::new(),
        mac: vec![CsmaNodeState::new(); n],
        schedules,
        next_beacon: vec![0; n],
        on_air: Vec::new(),
        free: Vec::new(),
        active: Vec::new(),
        transmitting: vec![None; n],
        sensed_mw: vec![0.0; n],
        occupied: vec![BusyTimer::default(); n],
        snapshots: vec![SnapshotRing::new(updates); n],
        neighbors: vec![NeighborTable::new(n, cfg.metrics.awareness_range_m, expiry); n],
        starting: Vec::new(),
        airtime_us: crate::phy::airtime_us(&cfg.mcs_profile(), cfg.technology),
        cs_threshold_mw: dbm_to_mw(cfg.csma.cs_threshold_dbm),
        warmup: cfg.warmup_us(),
        end: cfg.sim_time_us(),
    };
    for i in 0..n {
        let t = sim.schedules[i].nth(0);
        sim.push(t, BEACON, i, 0);
    }
    let mut t = 0;
    while t <= sim.end {
        sim.push(t, SAMPLE, 0, 0);
        t += update_us;
    }
    let horizon = sim.end + period + sim.airtime_us + 1;

    let mut batch = Vec::new();
    while let Some(&Reverse((t, ..))) = sim.heap.peek() {
        if t > horizon {
            break;
        }
        batch.clear();
        while let Some(&Reverse(e)) = sim.heap.peek() {
            if e.0 != t {
                break;
            }
            sim.heap.pop();
            batch.push(e);
        }
        let mut changed = false;
        let mut sample = false;
        for &(_, class, node, aux) in &batch {
            let node = node as usize;
            match class {
                TX_END => {
                    sim.on_tx_end(t, aux as usize)?;
                    changed = true;
                }
                BEACON => sim.on_beacon(t, node)?,
                TIMER => sim.on_timer(t, node, aux)?,
                _ => sample = true,
            }
        }
        sim.settle(t, changed)?;
        if sample {
            sim.on_sample(t);
        }
    }
    Ok(())
}

//! Subframe loop for LTE-V2X Mode 4.
//!
//! All nodes share the subframe clock. Beacons generated up to the start
//! of a subframe are handled before it; each one either uses the node's
//! reservation or triggers a new selection.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng;

use crate::dcc::{cbr_lte, NeighborTable};
use crate::error::SimError;
use crate::phy::decode;
use crate::scenario::VehicleId;
use crate::sps::{on_transmission_complete, sps_select, ResourceGrid, Selection, SpsNodeState};
use crate::transmission::{Airtime, Micros, TransmissionEvent};
use crate::phy::TTI_US;

use super::schedule::BeaconSchedule;
use super::{
    lost_everywhere, Collector, DccTraceRow, MacTraceRow, Outcome, ReceptionRecord, ReplicationOutput, RunOptions,
    SimConfig, World,
};

#[derive(Debug, Clone, Copy)]
struct Pending {
    seq: u64,
    generated_at: Micros,
    subframe: u64,
    slot: u32,
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
    let mcs = cfg.mcs_profile();
    let m = mcs.packets_per_tti as usize;
    let period = cfg.period_subframes();
    let grid = ResourceGrid::new(mcs.packets_per_tti, period, &cfg.sps)?;
    let warmup = cfg.warmup_us();
    let end = cfg.sim_time_us();
    let measured = |g: Micros| g >= warmup && g < end;
    let update_us = cfg.dcc.cbr_update_ms * 1000;
    let expiry = (cfg.dcc.neighbor_expiry_periods * cfg.period_us() as f64).round() as Micros;
    let cr = cfg.channel_occupancy();

    let schedules: Vec<BeaconSchedule> = (0..n).map(|_| BeaconSchedule::draw(period * TTI_US, rng)).collect();
    let mut next_beacon = vec![0u64; n];
    let mut gens: BinaryHeap<Reverse<(Micros, usize)>> = (0..n).map(|i| Reverse((schedules[i].nth(0), i))).collect();
    let mut nodes: Vec<SpsNodeState> = (0..n).map(|_| SpsNodeState::new(&grid, &cfg.sps)).collect();
    let mut forced: Vec<Option<(u64, u32, u32)>> = vec![None; n];
    for f in &opts.forced_reservations {
        if let Some(slot) = forced.get_mut(f.node.index()) {
            *slot = Some((f.phase % period, f.slot, f.rc));
        }
    }
    let mut pending: Vec<Option<Pending>> = vec![None; n];
    let ring = (period + grid.selection_window_subframes + 1) as usize;
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); ring];
    let mut neighbors = vec![NeighborTable::new(n, cfg.metrics.awareness_range_m, expiry); n];

    let mut transmitting = vec![false; n];
    let mut power = vec![0.0f64; m];
    let mut txs: Vec<(usize, Pending)> = Vec::new();
    let last_subframe = (end + cfg.period_us()) / TTI_US + 1;

    for sf in 0..=last_subframe {
        let t = sf * TTI_US;
        let measuring = t >= warmup && t < end;
        if t % update_us == 0 && measuring {
            for i in 0..n {
                let win = nodes[i].sensing.cbr_window();
                let Ok(cbr) = cbr_lte(&win) else { continue };
                let mm = win.slots_per_subframe as u64;
                col.cbr_sample(win.busy_slot_count + win.own_tx_subframes * mm, win.window_subframes * mm);
                let v = neighbors[i].count_at(&w.scenario.geometry, w.scenario.positions[i], t);
                col.neighbor_sample(v);
                if opts.trace_dcc {
                    out.dcc_trace.push(DccTraceRow { time_us: t, node: i, cbr, cr, neighbors: v });
                }
            }
        }

        while let Some(&Reverse((g, i))) = gens.peek() {
            if g > t {
                break;
            }
            gens.pop();
            let seq = next_beacon[i];
            next_beacon[i] += 1;
            let next = schedules[i].nth(seq + 1);
            if next < end + cfg.period_us() {
                gens.push(Reverse((next, i)));
            }
            if measured(g) {
                col.beacon_generated();
            }
            if let Some(old) = pending[i].take() {
                buckets[(old.subframe % ring as u64) as usize].retain(|&x| x != i);
                if measured(old.generated_at) {
                    col.beacon_expired();
                    lost_everywhere(col, &w.all[i], Outcome::LostExpiry);
                }
            }
            let ws = g.div_ceil(TTI_US);
            let usable = nodes[i]
                .reservation()
                .is_some_and(|r| r.next_subframe >= ws && r.next_subframe < ws + period);
            if !usable {
                let sel = match forced[i].take() {
                    Some((phase, slot, rc)) => {
                        let mut x = ws - ws % period + phase;
                        if x < ws {
                            x += period;
                        }
                        Selection { subframe: x, slot, rc }
                    }
                    None => sps_select(&nodes[i], &grid, &cfg.sps, ws, rng)?,
                };
                nodes[i].apply(sel);
            }
            let r = nodes[i].reservation().expect("reservation after selection");
            pending[i] = Some(Pending { seq, generated_at: g, subframe: r.next_subframe, slot: r.slot });
            buckets[(r.next_subframe % ring as u64) as usize].push(i);
        }

        txs.clear();
        let bucket = std::mem::take(&mut buckets[(sf % ring as u64) as usize]);
        for i in bucket {
            match pending[i] {
                Some(p) if p.subframe == sf => {
                    txs.push((i, p));
                    pending[i] = None;
                }
                _ => buckets[(sf % ring as u64) as usize].push(i),
            }
        }
        txs.sort_unstable_by_key(|&(i, _)| i);
        for &(i, _) in &txs {
            transmitting[i] = true;
        }

        for &(a, p) in &txs {
            let event = TransmissionEvent {
                tx_id: VehicleId(a),
                t_start: t,
                airtime: Airtime::Slot { subframe: sf, slot: p.slot },
                power_dbm: cfg.pt_dbm,
                mcs: cfg.mcs,
                beacon_seq: p.seq,
                generation_time: p.generated_at,
            };
            let is_measured = measured(p.generated_at);
            if is_measured {
                col.beacon_transmitted(t - p.generated_at);
            }
            let mut log_index = 0;
            if let Some(log) = out.log.as_mut() {
                log_index = log.transmissions.len();
                log.transmissions.push(event);
                log.measured.push(is_measured);
            }
            for link in &w.links[a] {
                let r = link.rx as usize;
                let outcome = if transmitting[r] {
                    Outcome::LostHalfDuplex
                } else {
                    let interf: f64 = txs
                        .iter()
                        .filter(|&&(b, q)| b != a && q.slot == p.slot)
                        .map(|&(b, _)| w.rx_mw(b, r))
                        .sum();
                    let sinr = 10.0 * (w.rx_mw(a, r) / (w.noise_mw + interf)).log10();
                    if decode(sinr, &mcs) {
                        Outcome::Received
                    } else {
                        Outcome::LostSinr
                    }
                };
                if outcome == Outcome::Received {
                    neighbors[r].observe(VehicleId(a), w.scenario.positions[a], t + TTI_US);
                }
                if is_measured {
                    col.collect(VehicleId(r), VehicleId(a), p.generated_at, link.distance_m, outcome);
                    if let Some(log) = out.log.as_mut() {
                        log.receptions.push(ReceptionRecord { tx_index: log_index, rx: VehicleId(r), outcome });
                    }
                }
            }
            if is_measured {
                lost_everywhere(col, &w.weak[a], Outcome::LostSinr);
            }
        }

        for i in 0..n {
            power.fill(0.0);
            for &(b, q) in &txs {
                if b != i {
                    power[q.slot as usize] += w.rx_mw(b, i);
                }
            }
            nodes[i].update_sensing(sf, &power, transmitting[i]);
        }

        for &(a, _) in &txs {
            transmitting[a] = false;
            on_transmission_complete(&mut nodes[a], &grid, &cfg.sps, rng);
            if opts.trace_mac {
                out.mac_trace.push(MacTraceRow::Sps {
                    subframe: sf,
                    node: a,
                    slot: txs.iter().find(|x| x.0 == a).map_or(0, |x| x.1.slot),
                    rc: nodes[a].reselection_counter(),
                });
            }
        }
    }
    Ok(())
}

//! End-to-end runs of both engines.

use super::{adjudicate, run, run_replication, ForcedReservation, Outcome, RunOptions, SimConfig, SimLog};
use crate::csma::{sense_busy, CsmaConfig};
use crate::phy::SinrPolicy;
use crate::transmission::{Airtime, TransmissionEvent};
use crate::{Technology, VehicleId};

fn short(tech: Technology, rho: f64) -> SimConfig {
    SimConfig {
        technology: tech,
        rho_veh_per_km: rho,
        sim_time_s: 2.0,
        replications: 1,
        ..Default::default()
    }
}

fn with_log(cfg: &SimConfig) -> SimLog {
    let opts = RunOptions { record_log: true, ..Default::default() };
    run_replication(cfg, 0, &opts).unwrap().log.unwrap()
}

#[test]
fn single_vehicle_has_no_opportunities() {
    for tech in Technology::ALL {
        let cfg = short(tech, 0.0);
        let opts = RunOptions { positions: Some(vec![500.0]), ..Default::default() };
        let r = run_replication(&cfg, 0, &opts).unwrap().report;
        assert_eq!(r.pdr_within_100m(), None);
        assert_eq!(r.accounting.total(), 0);
        let cbr = r.cbr_mean().unwrap();
        match tech {
            // Only its own airtime keeps the medium busy.
            Technology::Ieee80211pStar => assert!((cbr - cfg.channel_occupancy()).abs() < 1e-12),
            // Own subframes count whole: S_tx / S_sense.
            Technology::LteV2x => assert!((cbr - 0.01).abs() < 1e-12),
        }
    }
}

#[test]
fn two_close_csma_vehicles_do_not_collide() {
    let cfg = SimConfig { sim_time_s: 10.0, ..short(Technology::Ieee80211pStar, 0.0) };
    let opts = RunOptions { positions: Some(vec![100.0, 110.0]), ..Default::default() };
    let r = run_replication(&cfg, 0, &opts).unwrap().report;
    assert_eq!(r.within_range_opportunities, 2 * 90);
    assert_eq!(r.pdr_within_100m(), Some(1.0));
}

#[test]
fn same_slot_lte_pair_never_hears_each_other() {
    let cfg = SimConfig { sim_time_s: 5.0, ..short(Technology::LteV2x, 0.0) };
    let forced = |rc| {
        (0..2)
            .map(|i| ForcedReservation { node: VehicleId(i), phase: 17, slot: 1, rc })
            .collect::<Vec<_>>()
    };
    let opts = RunOptions {
        positions: Some(vec![100.0, 110.0]),
        forced_reservations: forced(1000),
        ..Default::default()
    };
    let r = run_replication(&cfg, 0, &opts).unwrap().report;
    assert_eq!(r.pdr_within_100m(), Some(0.0));
    assert_eq!(r.accounting.lost_half_duplex, r.accounting.total());

    // After the reservation runs out each picks a fresh resource and the
    // pair hears each other again.
    let opts = RunOptions { forced_reservations: forced(3), ..opts };
    let r = run_replication(&cfg, 0, &opts).unwrap().report;
    assert!(r.pdr_within_100m().unwrap() > 0.9);
}

#[test]
fn reruns_are_bit_identical() {
    for tech in Technology::ALL {
        let cfg = SimConfig { replications: 2, ..short(tech, 150.0) };
        assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
        let other = SimConfig { seed: 99, ..cfg.clone() };
        assert_ne!(run(&cfg).unwrap().accounting, run(&other).unwrap().accounting);
    }
}

#[test]
fn every_opportunity_has_one_outcome() {
    for tech in Technology::ALL {
        let cfg = short(tech, 150.0);
        let out = run_replication(&cfg, 0, &RunOptions::default()).unwrap();
        let r = &out.report;
        assert_eq!(r.beacons_generated, r.beacons_transmitted + r.beacons_expired);
        let opportunities: u64 = r.pdr_by_distance.opportunities.iter().sum();
        assert_eq!(r.accounting.total(), opportunities);
        // On a 2 km ring every other vehicle is within the last bin.
        assert_eq!(opportunities, r.beacons_generated * (r.vehicles - 1));
        for b in 0..r.pdr_by_distance.bins() {
            assert!(r.pdr_by_distance.successes[b] <= r.pdr_by_distance.opportunities[b]);
        }
    }
}

fn concurrent(log: &SimLog, idx: usize) -> Vec<TransmissionEvent> {
    let tx = &log.transmissions[idx];
    log.transmissions
        .iter()
        .filter(|e| e.t_start + 1000 >= tx.t_start && e.t_start < tx.t_end() && e.overlaps(tx))
        .copied()
        .collect()
}

fn cross_check(cfg: &SimConfig) {
    let log = with_log(cfg);
    let mcs = cfg.mcs_profile();
    let mut checked = 0;
    let mut by_tx: Vec<Vec<(VehicleId, Outcome)>> = vec![Vec::new(); log.transmissions.len()];
    for rec in &log.receptions {
        by_tx[rec.tx_index].push((rec.rx, rec.outcome));
    }
    for (idx, recs) in by_tx.iter().enumerate() {
        if recs.is_empty() {
            continue;
        }
        let tx = &log.transmissions[idx];
        let conc = concurrent(&log, idx);
        for &(rx, outcome) in recs {
            let pure = adjudicate(rx, tx, &conc, &log.channel, log.noise_mw, &mcs, cfg.phy.sinr_policy);
            assert_eq!(pure, outcome, "tx {idx} rx {rx:?}");
            checked += 1;
        }
        // Receivers the engine skipped cannot decode even in isolation.
        for r in 0..log.scenario.len() {
            let rx = VehicleId(r);
            if rx != tx.tx_id && !recs.iter().any(|x| x.0 == rx) {
                assert_ne!(
                    adjudicate(rx, tx, &[*tx], &log.channel, log.noise_mw, &mcs, cfg.phy.sinr_policy),
                    Outcome::Received
                );
            }
        }
    }
    assert!(checked > 1000);
}

#[test]
fn engine_matches_pure_adjudication() {
    cross_check(&SimConfig { sim_time_s: 1.3, ..short(Technology::Ieee80211pStar, 120.0) });
    let mut mean = SimConfig { sim_time_s: 1.3, ..short(Technology::Ieee80211pStar, 120.0) };
    mean.phy.sinr_policy = SinrPolicy::Mean;
    cross_check(&mean);
    cross_check(&SimConfig { sim_time_s: 1.3, ..short(Technology::LteV2x, 120.0) });
}

#[test]
fn csma_never_starts_on_a_busy_medium() {
    let cfg = SimConfig { sim_time_s: 1.5, ..short(Technology::Ieee80211pStar, 250.0) };
    let log = with_log(&cfg);
    let csma = CsmaConfig::default();
    for tx in &log.transmissions {
        let from = tx.t_start.saturating_sub(csma.aifs_us);
        let mut probes = vec![from, tx.t_start - 1];
        for e in &log.transmissions {
            for t in [e.t_start, e.t_end()] {
                if t >= from && t < tx.t_start {
                    probes.push(t);
                }
            }
        }
        for t in probes {
            assert!(!sense_busy(tx.tx_id, t, &log.transmissions, &log.channel, &csma), "{tx:?} at {t}");
        }
    }
}

#[test]
fn lte_is_subframe_aligned_and_half_duplex() {
    let cfg = short(Technology::LteV2x, 250.0);
    let log = with_log(&cfg);
    let mut busy = std::collections::HashSet::new();
    for tx in &log.transmissions {
        let Airtime::Slot { subframe, slot } = tx.airtime else { panic!("unexpected airtime") };
        assert_eq!(tx.t_start, subframe * 1000);
        assert!(slot < cfg.mcs_profile().packets_per_tti);
        assert!(tx.t_start - tx.generation_time < 100_000);
        busy.insert((tx.tx_id, subframe));
    }
    for rec in &log.receptions {
        let Airtime::Slot { subframe, .. } = log.transmissions[rec.tx_index].airtime else { unreachable!() };
        let deaf = busy.contains(&(rec.rx, subframe));
        assert_eq!(deaf, rec.outcome == Outcome::LostHalfDuplex);
    }
}

#[test]
fn gaps_never_undercut_the_period() {
    for tech in Technology::ALL {
        for fb in [10.0, 4.0] {
            let cfg = SimConfig { fb_hz: fb, sim_time_s: 4.0, ..short(tech, 200.0) };
            let r = run(&cfg).unwrap();
            assert!(r.ipg.min().unwrap() >= cfg.period_us(), "{tech} {fb}");
            assert_eq!(r.ipg.min().unwrap() % cfg.period_us(), 0);
        }
    }
}

#[test]
fn pdr_falls_with_distance() {
    for tech in Technology::ALL {
        let cfg = SimConfig { sim_time_s: 3.0, replications: 2, ..short(tech, 200.0) };
        let r = run(&cfg).unwrap();
        let h = &r.pdr_by_distance;
        // 50 m groups, compared with a three-sigma allowance.
        let groups: Vec<(f64, f64)> = (0..h.bins() / 5)
            .map(|g| {
                let s: u64 = h.successes[g * 5..g * 5 + 5].iter().sum();
                let n: u64 = h.opportunities[g * 5..g * 5 + 5].iter().sum();
                let p = s as f64 / n as f64;
                (p, (p * (1.0 - p) / n as f64).sqrt())
            })
            .collect();
        for w in groups.windows(2) {
            assert!(w[1].0 <= w[0].0 + 3.0 * (w[0].1 + w[1].1) + 1e-9, "{tech}: {groups:?}");
        }
        assert!(groups[0].0 > 0.95 && groups[groups.len() - 1].0 < 0.05);
    }
}

#[test]
fn traces_are_recorded_on_request() {
    for tech in Technology::ALL {
        let cfg = short(tech, 50.0);
        let opts = RunOptions { trace_mac: true, trace_dcc: true, ..Default::default() };
        let out = run_replication(&cfg, 0, &opts).unwrap();
        assert!(!out.mac_trace.is_empty());
        let n = out.report.vehicles as usize;
        assert_eq!(out.dcc_trace.len(), n * 10);
        assert!(out.dcc_trace.iter().all(|r| (0.0..=1.0).contains(&r.cbr)));
        let plain = run_replication(&cfg, 0, &RunOptions::default()).unwrap();
        assert!(plain.mac_trace.is_empty() && plain.dcc_trace.is_empty());
        assert_eq!(plain.report, out.report);
    }
}

#[test]
fn invalid_configs_fail_before_running() {
    let cfg = SimConfig { payload_bytes: 500, ..Default::default() };
    assert!(run(&cfg).is_err());
    let cfg = SimConfig { warmup_s: Some(0.2), ..Default::default() };
    assert!(run(&cfg).is_err());
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

        #[test]
        fn conservation_and_determinism(seed in 0u64..10_000, rho in 20.0f64..120.0, lte in any::<bool>(), fb in 2u32..=10) {
            let tech = if lte { Technology::LteV2x } else { Technology::Ieee80211pStar };
            let cfg = SimConfig { seed, fb_hz: fb as f64, sim_time_s: 2.5, ..short(tech, rho) };
            let a = run_replication(&cfg, 0, &RunOptions::default()).unwrap().report;
            let b = run_replication(&cfg, 0, &RunOptions::default()).unwrap().report;
            prop_assert_eq!(&a, &b);
            let opportunities: u64 = a.pdr_by_distance.opportunities.iter().sum();
            prop_assert_eq!(a.accounting.total(), opportunities);
            prop_assert_eq!(a.beacons_generated, a.beacons_transmitted + a.beacons_expired);
            if let Some(min) = a.ipg.min() {
                prop_assert!(min >= cfg.period_us());
            }
        }
    }
}

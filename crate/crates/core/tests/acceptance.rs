//! Acceptance gate. Prints one `[PASS]` or `[FAIL]` line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::HashSet;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use beaconsim_core::csma::{sense_busy, step, CsmaConfig, CsmaEvent, CsmaNodeState, QueuedBeacon};
use beaconsim_core::dcc::{cbr_11p, cbr_lte, occupancy_table, CbrWindow};
use beaconsim_core::engine::{
    run_replication, run_replications, ForcedReservation, MetricsReport, Outcome, ReplicationOutput, RunOptions,
    SimConfig,
};
use beaconsim_core::propagation::dbm_to_mw;
use beaconsim_core::sps::{on_transmission_complete, sps_select, ResourceGrid, Selection, SpsConfig, SpsNodeState};
use beaconsim_core::transmission::Airtime;
use beaconsim_core::{Technology, VehicleId};

const IEEE: Technology = Technology::Ieee80211pStar;
const LTE: Technology = Technology::LteV2x;

struct Verdict {
    ok: bool,
    detail: String,
}

fn verdict(ok: bool, detail: impl Into<String>) -> Verdict {
    Verdict { ok, detail: detail.into() }
}

fn base(tech: Technology, rho: f64, sim_time_s: f64, replications: u32) -> SimConfig {
    SimConfig { technology: tech, rho_veh_per_km: rho, sim_time_s, replications, ..Default::default() }
}

fn pooled(cfg: &SimConfig) -> (MetricsReport, Vec<ReplicationOutput>) {
    run_replications(cfg, &RunOptions::default()).expect("simulation failed")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("n/a".into(), |v| format!("{v:.4}"))
}

/// Rounds `x` to as many decimals as `printed` shows.
fn at_printed_precision(x: f64, printed: &str) -> String {
    let decimals = printed.split_once('.').map_or(0, |(_, f)| f.len());
    format!("{x:.decimals$}")
}

fn table_iii() -> Verdict {
    let printed = [
        ("0.0056", "0.01"),
        ("0.003", "0.005"),
        ("0.0019", "0.0033"),
        ("0.0016", "0.0025"),
        ("0.0015", "0.0025"),
        ("0.0003", "0.0005"),
    ];
    let rows = occupancy_table();
    let mut bad = Vec::new();
    for (row, (p11, plte)) in rows.iter().zip(printed) {
        let got = (at_printed_precision(row.cr_11p, p11), at_printed_precision(row.cr_lte, plte));
        if got.0 != p11 || got.1 != plte {
            bad.push(format!("{}/{} Hz: {}/{} vs {p11}/{plte}", row.mcs, row.fb_hz, got.0, got.1));
        }
    }
    let n = rows.len() * 2;
    if bad.is_empty() && rows.len() == 6 {
        verdict(true, format!("{n}/12 values at printed precision"))
    } else {
        verdict(false, bad.join("; "))
    }
}

fn cbr_units() -> Verdict {
    let tau = 1_000_000;
    // (busy us, own tx us, expected numerator, expected denominator)
    let ieee: [(u64, u64, u64, u64); 11] = [
        (0, 0, 0, 1),
        (200_000, 50_000, 1, 4),
        (0, 1_000_000, 1, 1),
        (1_000_000, 0, 1, 1),
        (500_000, 0, 1, 2),
        (0, 3_040, 38, 12_500),
        (100_000, 3_040, 12_880, 125_000),
        (333_333, 0, 333_333, 1_000_000),
        (999_999, 1, 1, 1),
        (123_456, 654_321, 777_777, 1_000_000),
        (1, 0, 1, 1_000_000),
    ];
    // (N_busy, S_tx, S_sense, M, expected numerator, expected denominator)
    let lte: [(u64, u64, u64, u32, u64, u64); 11] = [
        (0, 0, 1000, 2, 0, 1),
        (100, 10, 1000, 2, 3, 50),
        (2000, 0, 1000, 2, 1, 1),
        (0, 10, 1000, 2, 1, 100),
        (0, 10, 1000, 4, 1, 100),
        (1980, 10, 1000, 2, 1, 1),
        (7, 1, 1000, 3, 1, 300),
        (1, 0, 1000, 1, 1, 1000),
        (500, 100, 1000, 4, 9, 40),
        (999, 1, 1000, 1, 1, 1),
        (1234, 17, 1000, 3, 1285, 3000),
    ];
    let mut bad = Vec::new();
    for &(busy, tx, num, den) in &ieee {
        let got = cbr_11p(&CbrWindow::ieee(busy, tx, tau, tau)).unwrap();
        if got != num as f64 / den as f64 {
            bad.push(format!("11p ({busy},{tx}) -> {got}"));
        }
    }
    for &(nb, stx, s, m, num, den) in &lte {
        let got = cbr_lte(&CbrWindow::lte(nb, stx, s, s, m)).unwrap();
        if got != num as f64 / den as f64 {
            bad.push(format!("lte ({nb},{stx},{s},{m}) -> {got}"));
        }
    }
    // The same windows built by a sensing record: own subframes are
    // credited busy on every slot.
    let cfg = SpsConfig::default();
    let grid = ResourceGrid::new(2, 100, &cfg).unwrap();
    let mut node = SpsNodeState::new(&grid, &cfg);
    for sf in 0..1000u64 {
        let loud = dbm_to_mw(-80.0);
        let quiet = dbm_to_mw(-120.0);
        let slots = [if sf % 10 == 0 { loud } else { quiet }, if sf % 4 == 0 { loud } else { quiet }];
        node.update_sensing(sf, &slots, sf % 100 == 3);
    }
    let w = node.sensing.cbr_window();
    let sensed = cbr_lte(&w).unwrap();
    // 100 + 250 busy slots, 10 own subframes of which none is on a loud phase.
    if (w.busy_slot_count, w.own_tx_subframes) != (350, 10) || sensed != 370.0 / 2000.0 {
        bad.push(format!("sensed window {:?} -> {sensed}", (w.busy_slot_count, w.own_tx_subframes)));
    }
    // A lone LTE vehicle's medium is busy only in its own subframes.
    let single = run_replication(
        &base(LTE, 0.0, 3.0, 1),
        0,
        &RunOptions { positions: Some(vec![0.0]), ..Default::default() },
    )
    .unwrap()
    .report
    .cbr_mean();
    if single != Some(10.0 / 1000.0) {
        bad.push(format!("single LTE vehicle -> {single:?}"));
    }
    let n = ieee.len() + lte.len() + 2;
    if bad.is_empty() {
        verdict(true, format!("{n} windows exact"))
    } else {
        verdict(false, bad.join("; "))
    }
}

fn neighbor_linearity() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for tech in [IEEE, LTE] {
        for rho in [100.0, 200.0, 300.0, 400.0] {
            let reps = (3200.0 / rho as f64).ceil() as u32;
            let cfg = base(tech, rho, 2.0, reps);
            let v = pooled(&cfg).0.neighbor_mean().unwrap_or(0.0);
            let target = 0.2 * rho;
            let err = v / target - 1.0;
            let pass = err.abs() <= 0.05;
            ok &= pass;
            parts.push(format!("{tech} rho={rho} V={v:.2} ({:+.1}%){}", 100.0 * err, if pass { "" } else { " !" }));
            if rho <= 200.0 {
                let low = pooled(&SimConfig { pt_dbm: 8.0, ..cfg.clone() }).0.neighbor_mean().unwrap_or(0.0);
                let drift = low / v - 1.0;
                let pass = drift.abs() <= 0.02;
                ok &= pass;
                parts.push(format!("{tech} rho={rho} V8/V23-1={:+.2}%{}", 100.0 * drift, if pass { "" } else { " !" }));
            }
        }
    }
    verdict(ok, parts.join(", "))
}

fn beacon_rate_anchor() -> Verdict {
    let hi = SimConfig { fb_hz: 10.0, ..base(LTE, 300.0, 4.0, 4) };
    let lo = SimConfig { fb_hz: 1.0, sim_time_s: 10.0, warmup_s: Some(2.0), ..base(LTE, 300.0, 10.0, 4) };
    let r10 = pooled(&hi).0.range_pdr90_m().unwrap_or(0.0);
    let r1 = pooled(&lo).0.range_pdr90_m().unwrap_or(0.0);
    let ratio = if r10 > 0.0 { r1 / r10 } else { f64::INFINITY };
    let e10 = (12.5..=50.0).contains(&r10);
    let e1 = (125.0..=500.0).contains(&r1);
    let er = ratio >= 5.0;
    verdict(
        e10 && e1 && er,
        format!(
            "range90 10 Hz={r10:.1} m [12.5,50]{} 1 Hz={r1:.1} m [125,500]{} ratio={ratio:.2} >=5{}",
            if e10 { "" } else { " !" },
            if e1 { "" } else { " !" },
            if er { "" } else { " !" }
        ),
    )
}

/// Paired change of PDR within 100 m for 23 -> 8 dBm: (mean, standard error).
fn power_delta(tech: Technology) -> (f64, f64) {
    let hi = base(tech, 300.0, 4.0, 6);
    let lo = SimConfig { pt_dbm: 8.0, ..hi.clone() };
    let a = pooled(&hi).1;
    let b = pooled(&lo).1;
    let d: Vec<f64> = a
        .iter()
        .zip(&b)
        .map(|(x, y)| y.report.pdr_within_100m().unwrap() - x.report.pdr_within_100m().unwrap())
        .collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn power_knob() -> Verdict {
    let (d11, se11) = power_delta(IEEE);
    let (dlte, selte) = power_delta(LTE);
    let ok11 = d11.abs() > 0.05 && d11.abs() > 3.0 * se11;
    let oklte = dlte.abs() < 0.02;
    verdict(
        ok11 && oklte,
        format!(
            "11p delta={:+.2} pts (se {:.2}) |d|>5{}, LTE delta={:+.2} pts (se {:.2}) |d|<2{}",
            100.0 * d11,
            100.0 * se11,
            if ok11 { "" } else { " !" },
            100.0 * dlte,
            100.0 * selte,
            if oklte { "" } else { " !" }
        ),
    )
}

fn delay_tradeoff() -> Verdict {
    let p999 = |tech, fb: f64| {
        let cfg = if fb < 5.0 {
            SimConfig { fb_hz: fb, warmup_s: Some(2.0), ..base(tech, 300.0, 10.0, 2) }
        } else {
            SimConfig { fb_hz: fb, ..base(tech, 300.0, 4.0, 2) }
        };
        pooled(&cfg).0.ipg_p999_s().unwrap_or(f64::NAN)
    };
    let (i10, i1, l10, l1) = (p999(IEEE, 10.0), p999(IEEE, 1.0), p999(LTE, 10.0), p999(LTE, 1.0));
    let ok = i1 > i10 && l1 > l10 && l10 > i10 && l1 > i1;
    verdict(ok, format!("p999 11p {i10:.2} s -> {i1:.2} s, LTE {l10:.2} s -> {l1:.2} s"))
}

fn property_suites() -> Verdict {
    let mut bad: Vec<String> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    // Never transmit while the medium is sensed busy.
    let cfg = base(IEEE, 250.0, 1.5, 1);
    let log = run_replication(&cfg, 0, &RunOptions { record_log: true, ..Default::default() })
        .unwrap()
        .log
        .unwrap();
    let csma = CsmaConfig::default();
    let starts: Vec<u64> = log.transmissions.iter().map(|e| e.t_start).collect();
    for tx in &log.transmissions {
        let from = tx.t_start.saturating_sub(csma.aifs_us);
        let lo = starts.partition_point(|&s| s + 1000 < from);
        let probes = log.transmissions[lo..]
            .iter()
            .take_while(|e| e.t_start < tx.t_start)
            .flat_map(|e| [e.t_start, e.t_end()])
            .filter(|&t| t >= from && t < tx.t_start)
            .chain([from, tx.t_start - 1]);
        if probes.into_iter().any(|t| sense_busy(tx.tx_id, t, &log.transmissions, &log.channel, &csma)) {
            bad.push("csma started on a busy medium".into());
            break;
        }
    }

    // Backoff uniformity over 0..=15 slots.
    let trials = 160_000u64;
    let mut counts = [0u64; 16];
    for _ in 0..trials {
        let mut n = CsmaNodeState::new();
        step(&mut n, CsmaEvent::ChannelBecomesBusy, &csma, &mut rng).unwrap();
        step(&mut n, CsmaEvent::BeaconReady(QueuedBeacon { seq: 0, generated_at: 0 }), &csma, &mut rng).unwrap();
        counts[n.backoff_slots_remaining() as usize] += 1;
    }
    let e = trials as f64 / 16.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    // 99.9% point of chi-square with 15 degrees of freedom.
    if chi2 > 37.70 {
        bad.push(format!("backoff chi2={chi2:.1}"));
    }

    // Excluded slot never chosen, and the pick is in the quietest fifth.
    let sps = SpsConfig::default();
    let grid = ResourceGrid::new(2, 100, &sps).unwrap();
    let mut node = SpsNodeState::new(&grid, &sps);
    for sf in 0..1000u64 {
        let ramp = dbm_to_mw(-140.0 + 0.2 * (sf % 100) as f64);
        let first = if sf % 100 == 5 { dbm_to_mw(-70.0) } else { ramp };
        node.update_sensing(sf, &[first, ramp], false);
    }
    for _ in 0..5000 {
        let sel = sps_select(&node, &grid, &sps, 1000, &mut rng).unwrap();
        if sel.subframe % 100 == 5 && sel.slot == 0 {
            bad.push("excluded slot selected".into());
            break;
        }
        // 40 of 200 candidates, 39 below phase 20 once the hot one is gone.
        if sel.subframe % 100 > 20 {
            bad.push(format!("pick outside best 20%: {sel:?}"));
            break;
        }
    }

    // Keep probability 0 forces reselection when the counter runs out.
    for _ in 0..100 {
        let mut n = SpsNodeState::new(&grid, &sps);
        n.apply(Selection { subframe: 10, slot: 0, rc: 1 });
        on_transmission_complete(&mut n, &grid, &sps, &mut rng);
        if !n.needs_selection() {
            bad.push("reservation kept at rc expiry".into());
            break;
        }
    }

    // Half-duplex blindness of an LTE pair sharing a subframe.
    let pair = base(LTE, 0.0, 3.0, 1);
    let forced = (0..2).map(|i| ForcedReservation { node: VehicleId(i), phase: 40, slot: i as u32, rc: 1000 }).collect();
    let opts = RunOptions { positions: Some(vec![0.0, 20.0]), forced_reservations: forced, ..Default::default() };
    let r = run_replication(&pair, 0, &opts).unwrap().report;
    if r.accounting.total() == 0 || r.accounting.lost_half_duplex != r.accounting.total() {
        bad.push(format!("half duplex: {:?}", r.accounting));
    }
    let log = run_replication(&base(LTE, 200.0, 1.5, 1), 0, &RunOptions { record_log: true, ..Default::default() })
        .unwrap()
        .log
        .unwrap();
    let on_air: HashSet<(VehicleId, u64)> = log
        .transmissions
        .iter()
        .filter_map(|t| match t.airtime {
            Airtime::Slot { subframe, .. } => Some((t.tx_id, subframe)),
            Airtime::Duration { .. } => None,
        })
        .collect();
    for rec in &log.receptions {
        if let Airtime::Slot { subframe, .. } = log.transmissions[rec.tx_index].airtime {
            if on_air.contains(&(rec.rx, subframe)) != (rec.outcome == Outcome::LostHalfDuplex) {
                bad.push("half-duplex outcome mismatch".into());
                break;
            }
        }
    }

    for tech in [IEEE, LTE] {
        let cfg = base(tech, 200.0, 3.0, 2);
        let (a, _) = pooled(&cfg);
        let (b, _) = pooled(&cfg);
        if a != b {
            bad.push(format!("{tech}: reruns differ"));
        }
        // PDR monotone over 50 m groups, three-sigma allowance.
        let h = &a.pdr_by_distance;
        let groups: Vec<(f64, f64)> = (0..h.bins() / 5)
            .map(|g| {
                let s: u64 = h.successes[g * 5..g * 5 + 5].iter().sum();
                let n: u64 = h.opportunities[g * 5..g * 5 + 5].iter().sum();
                let p = s as f64 / n as f64;
                (p, (p * (1.0 - p) / n as f64).sqrt())
            })
            .collect();
        if groups.windows(2).any(|w| w[1].0 > w[0].0 + 3.0 * (w[0].1 + w[1].1) + 1e-9) {
            bad.push(format!("{tech}: pdr not monotone"));
        }
        if a.ipg.min().is_none_or(|m| m < cfg.period_us()) {
            bad.push(format!("{tech}: gap below period"));
        }
        let opportunities: u64 = h.opportunities.iter().sum();
        if a.accounting.total() != opportunities || a.beacons_generated != a.beacons_transmitted + a.beacons_expired {
            bad.push(format!("{tech}: accounting not conserved"));
        }
    }

    if bad.is_empty() {
        verdict(true, "busy-medium, backoff chi2, exclusion, best 20%, p_k=0, half duplex, monotone PDR, IPG bound, reruns, conservation")
    } else {
        verdict(false, bad.join("; "))
    }
}

fn cbr_trend() -> Verdict {
    let rhos = [100.0, 200.0, 300.0, 400.0, 500.0];
    let series = |tech| -> Vec<f64> {
        rhos.iter().map(|&rho| pooled(&base(tech, rho, 2.0, 12)).0.cbr_mean().unwrap_or(f64::NAN)).collect()
    };
    let i = series(IEEE);
    let l = series(LTE);
    let monotone = |s: &[f64]| s.windows(2).all(|w| w[1] >= w[0]);
    let above = l.iter().zip(&i).all(|(a, b)| a > b);
    let concave = l.windows(3).all(|w| w[2] - 2.0 * w[1] + w[0] <= 0.0);
    let show = |s: &[f64]| s.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/");
    let ok = monotone(&i) && monotone(&l) && above && concave;
    verdict(
        ok,
        format!(
            "11p {} LTE {} (monotone {}/{}, LTE>11p {above}, LTE concave {concave})",
            show(&i),
            show(&l),
            monotone(&i),
            monotone(&l)
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("table3_exact", table_iii),
        ("cbr_formula_units", cbr_units),
        ("neighbor_linearity", neighbor_linearity),
        ("beacon_rate_anchor", beacon_rate_anchor),
        ("power_knob_asymmetry", power_knob),
        ("delay_tradeoff", delay_tradeoff),
        ("property_suites", property_suites),
        ("cbr_trend", cbr_trend),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let t = Instant::now();
        let v = f();
        println!(
            "[{}] {name}: {} ({:.1} s)",
            if v.ok { "PASS" } else { "FAIL" },
            v.detail,
            t.elapsed().as_secs_f64()
        );
        failed += usize::from(!v.ok);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

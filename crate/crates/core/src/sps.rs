//! LTE-V2X Mode 4 sensing-based semi-persistent scheduling.
//!
//! The grid is one subframe per TTI with `slots_per_subframe` packet-sized
//! slots. Each node keeps a 1000-subframe sensing history and, when it
//! needs a new reservation, picks among the least-interfered candidates
//! of its selection window.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dcc::CbrWindow;
use crate::error::ConfigError;
use crate::phy::TTI_US;
use crate::propagation::{dbm_to_mw, mw_to_dbm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpsConfig {
    pub selection_window_cap_subframes: u64,
    pub sensing_window_subframes: u64,
    pub sensing_threshold_dbm: f64,
    pub threshold_step_db: f64,
    /// Exclusion is relaxed until at least this fraction of the window
    /// survives; the final pick is drawn from this many lowest-power
    /// candidates.
    pub candidate_fraction: f64,
    /// Reselection counter range at 10 Hz, scaled for slower rates.
    pub rc_min: u32,
    pub rc_max: u32,
    pub keep_probability: f64,
}

impl Default for SpsConfig {
    fn default() -> Self {
        Self {
            selection_window_cap_subframes: 100,
            sensing_window_subframes: 1000,
            sensing_threshold_dbm: -94.0,
            threshold_step_db: 3.0,
            candidate_fraction: 0.2,
            rc_min: 5,
            rc_max: 15,
            keep_probability: 0.0,
        }
    }
}

impl SpsConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.selection_window_cap_subframes == 0 {
            return Err(ConfigError::invalid("sps.selection_window_cap_subframes", "must be positive"));
        }
        if self.sensing_window_subframes == 0 {
            return Err(ConfigError::invalid("sps.sensing_window_subframes", "must be positive"));
        }
        if !(self.threshold_step_db > 0.0) {
            return Err(ConfigError::invalid("sps.threshold_step_db", "must be positive"));
        }
        if !(self.candidate_fraction > 0.0 && self.candidate_fraction <= 1.0) {
            return Err(ConfigError::invalid("sps.candidate_fraction", "must be in (0, 1]"));
        }
        if self.rc_min == 0 || self.rc_min > self.rc_max {
            return Err(ConfigError::invalid("sps.rc_min", "need 1 <= rc_min <= rc_max"));
        }
        if !(0.0..=1.0).contains(&self.keep_probability) {
            return Err(ConfigError::invalid("sps.keep_probability", "must be in [0, 1]"));
        }
        Ok(())
    }

    /// RC bounds for a reservation period, scaled by 100 / period_ms.
    pub fn rc_range(&self, period_subframes: u64) -> (u32, u32) {
        let scale = 100.0 / period_subframes as f64;
        let lo = ((self.rc_min as f64 * scale).round() as u32).max(1);
        let hi = ((self.rc_max as f64 * scale).round() as u32).max(lo);
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ResourceGrid {
    pub tti_us: u64,
    pub slots_per_subframe: u32,
    pub period_subframes: u64,
    pub selection_window_subframes: u64,
    pub sensing_window_subframes: u64,
}

impl ResourceGrid {
    pub fn new(slots_per_subframe: u32, period_subframes: u64, cfg: &SpsConfig) -> Result<Self, ConfigError> {
        if !(1..=4).contains(&slots_per_subframe) {
            return Err(ConfigError::invalid("sps.slots_per_subframe", "must be 1..=4"));
        }
        if period_subframes == 0 {
            return Err(ConfigError::invalid("fb_hz", "reservation period must be at least one subframe"));
        }
        Ok(Self {
            tti_us: TTI_US,
            slots_per_subframe,
            period_subframes,
            selection_window_subframes: period_subframes.min(cfg.selection_window_cap_subframes),
            sensing_window_subframes: cfg.sensing_window_subframes,
        })
    }

    pub fn candidates(&self) -> usize {
        self.selection_window_subframes as usize * self.slots_per_subframe as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlotSensingRecord {
    pub avg_rx_power_dbm: f64,
    pub busy: bool,
    pub own_tx_subframe: bool,
}

/// Sliding per-slot power history.
#[derive(Debug, Clone)]
pub struct SensingWindow {
    len: u64,
    m: usize,
    threshold_mw: f64,
    power_mw: Vec<f32>,
    own_tx: Vec<bool>,
    next: u64,
    busy_slots: u64,
    tx_subframes: u64,
}

impl SensingWindow {
    pub fn new(grid: &ResourceGrid, threshold_dbm: f64) -> Self {
        let len = grid.sensing_window_subframes;
        let m = grid.slots_per_subframe as usize;
        Self {
            len,
            m,
            threshold_mw: dbm_to_mw(threshold_dbm),
            power_mw: vec![0.0; len as usize * m],
            own_tx: vec![false; len as usize],
            next: 0,
            busy_slots: 0,
            tx_subframes: 0,
        }
    }

    fn ring(&self, subframe: u64) -> usize {
        (subframe % self.len) as usize
    }

    fn slot_busy(&self, p: f32) -> bool {
        p as f64 >= self.threshold_mw
    }

    fn count(&self, idx: usize) -> (u64, u64) {
        if self.own_tx[idx] {
            (0, 1)
        } else {
            let busy = self.power_mw[idx * self.m..(idx + 1) * self.m]
                .iter()
                .filter(|&&p| self.slot_busy(p))
                .count() as u64;
            (busy, 0)
        }
    }

    /// Records one subframe. Subframes must arrive in order; skipped ones
    /// are recorded as idle.
    pub fn record(&mut self, subframe: u64, per_slot_mw: &[f64], transmitted: bool) {
        debug_assert_eq!(per_slot_mw.len(), self.m);
        while self.next < subframe {
            let s = self.next;
            self.push(s, None, false);
        }
        if subframe < self.next {
            return;
        }
        self.push(subframe, Some(per_slot_mw), transmitted);
    }

    fn push(&mut self, subframe: u64, per_slot_mw: Option<&[f64]>, transmitted: bool) {
        let idx = self.ring(subframe);
        if subframe >= self.len {
            let (b, t) = self.count(idx);
            self.busy_slots -= b;
            self.tx_subframes -= t;
        }
        self.own_tx[idx] = transmitted;
        for s in 0..self.m {
            self.power_mw[idx * self.m + s] = match (transmitted, per_slot_mw) {
                (false, Some(p)) => p[s] as f32,
                _ => 0.0,
            };
        }
        let (b, t) = self.count(idx);
        self.busy_slots += b;
        self.tx_subframes += t;
        self.next = subframe + 1;
    }

    pub fn recorded_subframes(&self) -> u64 {
        self.next.min(self.len)
    }

    pub fn is_full(&self) -> bool {
        self.next >= self.len
    }

    fn in_window(&self, subframe: u64) -> bool {
        subframe < self.next && subframe + self.len >= self.next
    }

    /// The stored record for one slot of a subframe still in the window.
    pub fn record_at(&self, subframe: u64, slot: u32) -> Option<SlotSensingRecord> {
        if !self.in_window(subframe) || slot as usize >= self.m {
            return None;
        }
        let idx = self.ring(subframe);
        let p = self.power_mw[idx * self.m + slot as usize];
        let own = self.own_tx[idx];
        Some(SlotSensingRecord {
            avg_rx_power_dbm: mw_to_dbm(p as f64),
            busy: own || self.slot_busy(p),
            own_tx_subframe: own,
        })
    }

    pub fn cbr_window(&self) -> CbrWindow {
        CbrWindow::lte(self.busy_slots, self.tx_subframes, self.recorded_subframes(), self.len, self.m as u32)
    }

    /// Mean power (mW) of `slot` over the window subframes congruent to
    /// `subframe` modulo `period`, and whether any of them was blind.
    pub fn history(&self, subframe: u64, slot: u32, period: u64) -> (f64, bool) {
        let mut sum = 0.0;
        let mut n = 0u32;
        let mut blind = false;
        let mut j = subframe;
        while j >= period {
            j -= period;
            if j >= self.next {
                continue;
            }
            if !self.in_window(j) {
                break;
            }
            let idx = self.ring(j);
            if self.own_tx[idx] {
                blind = true;
            } else {
                sum += self.power_mw[idx * self.m + slot as usize] as f64;
                n += 1;
            }
        }
        (if n > 0 { sum / n as f64 } else { 0.0 }, blind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Reservation {
    pub next_subframe: u64,
    pub slot: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Selection {
    pub subframe: u64,
    pub slot: u32,
    pub rc: u32,
}

#[derive(Debug, Clone)]
pub struct SpsNodeState {
    reservation: Option<Reservation>,
    rc: u32,
    keep_probability: f64,
    pub sensing: SensingWindow,
}

impl SpsNodeState {
    pub fn new(grid: &ResourceGrid, cfg: &SpsConfig) -> Self {
        Self {
            reservation: None,
            rc: 0,
            keep_probability: cfg.keep_probability,
            sensing: SensingWindow::new(grid, cfg.sensing_threshold_dbm),
        }
    }

    pub fn reservation(&self) -> Option<Reservation> {
        self.reservation
    }

    pub fn reselection_counter(&self) -> u32 {
        self.rc
    }

    pub fn keep_probability(&self) -> f64 {
        self.keep_probability
    }

    pub fn needs_selection(&self) -> bool {
        self.reservation.is_none()
    }

    pub fn apply(&mut self, sel: Selection) {
        self.reservation = Some(Reservation { next_subframe: sel.subframe, slot: sel.slot });
        self.rc = sel.rc;
    }

    /// Sensed power at `(phase, slot)` in dBm, averaged over the window.
    pub fn sensed_power_dbm(&self, grid: &ResourceGrid, phase: u64, slot: u32) -> f64 {
        let period = grid.period_subframes;
        let next = self.sensing.next;
        let mut x = next - next % period + phase % period;
        if x < next {
            x += period;
        }
        let (p, _) = self.sensing.history(x, slot, period);
        mw_to_dbm(p)
    }

    pub fn update_sensing(&mut self, subframe: u64, per_slot_mw: &[f64], transmitted: bool) {
        self.sensing.record(subframe, per_slot_mw, transmitted);
    }
}

fn draw_rc<R: Rng + ?Sized>(grid: &ResourceGrid, cfg: &SpsConfig, rng: &mut R) -> u32 {
    let (lo, hi) = cfg.rc_range(grid.period_subframes);
    rng.random_range(lo..=hi)
}

/// Picks a resource in the selection window starting at `window_start`.
pub fn sps_select<R: Rng + ?Sized>(
    node: &SpsNodeState,
    grid: &ResourceGrid,
    cfg: &SpsConfig,
    window_start: u64,
    rng: &mut R,
) -> Result<Selection, ConfigError> {
    let total = grid.candidates();
    if total == 0 {
        return Err(ConfigError::invalid("sps", "empty resource grid"));
    }
    let target = ((cfg.candidate_fraction * total as f64).ceil() as usize).clamp(1, total);

    let mut open = Vec::with_capacity(total);
    let mut blind = Vec::new();
    for x in window_start..window_start + grid.selection_window_subframes {
        for s in 0..grid.slots_per_subframe {
            let (p, is_blind) = node.sensing.history(x, s, grid.period_subframes);
            if is_blind {
                blind.push((x, s, p));
            } else {
                open.push((x, s, p));
            }
        }
    }

    // Random order first so the stable sort breaks power ties uniformly.
    open.shuffle(rng);
    open.sort_by(|a, b| a.2.total_cmp(&b.2));

    let mut survivors = if open.is_empty() {
        0
    } else {
        let mut thr_dbm = cfg.sensing_threshold_dbm;
        let max_p = open[open.len() - 1].2;
        loop {
            let thr = dbm_to_mw(thr_dbm);
            let n = open.partition_point(|c| c.2 < thr);
            if n >= target || thr > max_p {
                break n;
            }
            thr_dbm += cfg.threshold_step_db;
        }
    };
    let pool = if survivors == 0 {
        blind.shuffle(rng);
        blind.sort_by(|a, b| a.2.total_cmp(&b.2));
        survivors = blind.len();
        &blind
    } else {
        &open
    };
    let best = survivors.min(target);
    let (subframe, slot, _) = pool[rng.random_range(0..best)];
    Ok(Selection { subframe, slot, rc: draw_rc(grid, cfg, rng) })
}

/// Bookkeeping after the node used its reservation in the current period.
pub fn on_transmission_complete<R: Rng + ?Sized>(
    node: &mut SpsNodeState,
    grid: &ResourceGrid,
    cfg: &SpsConfig,
    rng: &mut R,
) {
    let Some(mut res) = node.reservation else { return };
    node.rc = node.rc.saturating_sub(1);
    res.next_subframe += grid.period_subframes;
    if node.rc == 0 {
        if node.keep_probability > 0.0 && rng.random_bool(node.keep_probability) {
            node.rc = draw_rc(grid, cfg, rng);
            node.reservation = Some(res);
        } else {
            node.reservation = None;
        }
    } else {
        node.reservation = Some(res);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(m: u32, period: u64) -> (ResourceGrid, SpsConfig, SpsNodeState) {
        let cfg = SpsConfig::default();
        let grid = ResourceGrid::new(m, period, &cfg).unwrap();
        let node = SpsNodeState::new(&grid, &cfg);
        (grid, cfg, node)
    }

    fn fill(node: &mut SpsNodeState, m: usize, subframes: u64, f: impl Fn(u64, usize) -> f64) {
        let mut buf = vec![0.0; m];
        for sf in 0..subframes {
            for (s, b) in buf.iter_mut().enumerate() {
                *b = f(sf, s);
            }
            node.update_sensing(sf, &buf, false);
        }
    }

    #[test]
    fn window_is_capped_by_period() {
        let cfg = SpsConfig::default();
        assert_eq!(ResourceGrid::new(2, 100, &cfg).unwrap().selection_window_subframes, 100);
        assert_eq!(ResourceGrid::new(2, 1000, &cfg).unwrap().selection_window_subframes, 100);
        assert_eq!(ResourceGrid::new(2, 50, &cfg).unwrap().selection_window_subframes, 50);
        assert!(ResourceGrid::new(5, 100, &cfg).is_err());
    }

    #[test]
    fn rc_ranges_scale_with_period() {
        let cfg = SpsConfig::default();
        assert_eq!(cfg.rc_range(100), (5, 15));
        assert_eq!(cfg.rc_range(200), (3, 8));
        assert_eq!(cfg.rc_range(1000), (1, 2));
    }

    #[test]
    fn equal_power_selection_is_uniform() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let (grid, cfg, mut node) = setup(2, 100);
        fill(&mut node, 2, 1000, |_, _| dbm_to_mw(-110.0));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = vec![0u64; grid.candidates()];
        let draws = 100_000;
        for _ in 0..draws {
            let sel = sps_select(&node, &grid, &cfg, 1000, &mut rng).unwrap();
            counts[((sel.subframe - 1000) * 2 + sel.slot as u64) as usize] += 1;
            assert!((5..=15).contains(&sel.rc));
        }
        let e = draws as f64 / counts.len() as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        let p = 1.0 - ChiSquared::new(counts.len() as f64 - 1.0).unwrap().cdf(chi2);
        assert!(p > 0.01, "p={p}");
    }

    #[test]
    fn hot_slot_is_never_selected() {
        let (grid, cfg, mut node) = setup(1, 100);
        fill(&mut node, 1, 1000, |sf, _| if sf % 100 == 42 { dbm_to_mw(-80.0) } else { dbm_to_mw(-120.0) });
        assert!(node.sensed_power_dbm(&grid, 42, 0) > -80.1);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10_000 {
            let sel = sps_select(&node, &grid, &cfg, 1000, &mut rng).unwrap();
            assert_ne!(sel.subframe % 100, 42);
        }
    }

    #[test]
    fn pick_comes_from_lowest_fifth() {
        let (grid, cfg, mut node) = setup(1, 100);
        // Phase k has power rising with k, all under the threshold.
        fill(&mut node, 1, 1000, |sf, _| dbm_to_mw(-140.0 + 0.3 * (sf % 100) as f64));
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10_000 {
            let sel = sps_select(&node, &grid, &cfg, 1000, &mut rng).unwrap();
            assert!(sel.subframe % 100 < 20);
        }
    }

    #[test]
    fn blind_phase_is_never_selected() {
        let (grid, cfg, mut node) = setup(2, 100);
        let mut buf = [0.0; 2];
        for sf in 0..1000u64 {
            buf.fill(dbm_to_mw(-120.0));
            node.update_sensing(sf, &buf, sf % 100 == 7);
        }
        // Blind subframes would otherwise look like the quietest ones.
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..10_000 {
            let sel = sps_select(&node, &grid, &cfg, 1000, &mut rng).unwrap();
            assert_ne!(sel.subframe % 100, 7);
        }
    }

    #[test]
    fn crowded_window_relaxes_threshold() {
        let (grid, cfg, mut node) = setup(1, 100);
        // Every phase is above -94 dBm; the quietest ones are still picked.
        fill(&mut node, 1, 1000, |sf, _| dbm_to_mw(-90.0 + 0.1 * (sf % 100) as f64));
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..1000 {
            let sel = sps_select(&node, &grid, &cfg, 1000, &mut rng).unwrap();
            assert!(sel.subframe % 100 < 20);
        }
    }

    #[test]
    fn threshold_is_inclusive() {
        let (_, _, mut node) = setup(2, 100);
        node.update_sensing(0, &[dbm_to_mw(-93.9), dbm_to_mw(-94.1)], false);
        assert!(node.sensing.record_at(0, 0).unwrap().busy);
        assert!(!node.sensing.record_at(0, 1).unwrap().busy);
        assert_eq!(node.sensing.cbr_window().busy_slot_count, 1);
    }

    #[test]
    fn transmitted_subframe_is_blind_and_busy() {
        let (_, _, mut node) = setup(3, 100);
        node.update_sensing(0, &[0.0; 3], true);
        for s in 0..3 {
            let r = node.sensing.record_at(0, s).unwrap();
            assert!(r.busy && r.own_tx_subframe);
        }
        let w = node.sensing.cbr_window();
        assert_eq!((w.busy_slot_count, w.own_tx_subframes), (0, 1));
    }

    #[test]
    fn idle_window_has_zero_counts() {
        let (_, _, mut node) = setup(2, 100);
        fill(&mut node, 2, 1000, |_, _| 0.0);
        assert!(node.sensing.is_full());
        let w = node.sensing.cbr_window();
        assert_eq!((w.busy_slot_count, w.own_tx_subframes), (0, 0));
        assert_eq!(crate::dcc::cbr_lte(&w).unwrap(), 0.0);
    }

    #[test]
    fn window_slides() {
        let (_, _, mut node) = setup(1, 100);
        node.update_sensing(0, &[1.0], false);
        node.update_sensing(1, &[0.0], true);
        fill(&mut node, 1, 0, |_, _| 0.0);
        let w = node.sensing.cbr_window();
        assert_eq!((w.busy_slot_count, w.own_tx_subframes), (1, 1));
        node.update_sensing(1001, &[0.0], false);
        let w = node.sensing.cbr_window();
        assert_eq!((w.busy_slot_count, w.own_tx_subframes), (0, 0));
        assert!(node.sensing.record_at(1, 0).is_none());
    }

    #[test]
    fn rc_decrements_and_expires() {
        let (grid, mut cfg, mut node) = setup(2, 100);
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        node.apply(Selection { subframe: 10, slot: 1, rc: 5 });
        on_transmission_complete(&mut node, &grid, &cfg, &mut rng);
        assert_eq!(node.reselection_counter(), 4);
        assert_eq!(node.reservation(), Some(Reservation { next_subframe: 110, slot: 1 }));
        node.apply(Selection { subframe: 10, slot: 1, rc: 1 });
        on_transmission_complete(&mut node, &grid, &cfg, &mut rng);
        assert!(node.needs_selection());

        cfg.keep_probability = 1.0;
        let mut node = SpsNodeState::new(&grid, &cfg);
        node.apply(Selection { subframe: 10, slot: 1, rc: 1 });
        on_transmission_complete(&mut node, &grid, &cfg, &mut rng);
        assert_eq!(node.reservation().map(|r| r.slot), Some(1));
        assert!((5..=15).contains(&node.reselection_counter()));
    }

    proptest::proptest! {
        #[test]
        fn selection_respects_window_and_exclusion(seed in 0u64..1000, hot in 0u64..100) {
            let (grid, cfg, mut node) = setup(2, 100);
            fill(&mut node, 2, 1000, |sf, s| {
                if sf % 100 == hot && s == 0 { dbm_to_mw(-70.0) } else { dbm_to_mw(-115.0) }
            });
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sel = sps_select(&node, &grid, &cfg, 1234, &mut rng).unwrap();
            proptest::prop_assert!((1234..1334).contains(&sel.subframe));
            proptest::prop_assert!(!(sel.subframe % 100 == hot && sel.slot == 0));
        }
    }
}

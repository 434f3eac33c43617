//! Broadcast CSMA/CA for 802.11p* beaconing.
//!
//! No acknowledgements, no retransmissions and a fixed contention window.
//! A beacon that arrives on an idle medium waits one AIFS and goes out; a
//! beacon that meets a busy medium draws a backoff, which is frozen while
//! the medium is busy and resumed after the next idle AIFS.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, SimError};
use crate::propagation::{dbm_to_mw, ChannelRealization};
use crate::scenario::VehicleId;
use crate::transmission::{Micros, TransmissionEvent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsmaConfig {
    pub aifs_us: u64,
    pub slot_us: u64,
    /// Backoff is drawn uniformly from `0..=cw_max_slots`.
    pub cw_max_slots: u32,
    pub cs_threshold_dbm: f64,
}

impl Default for CsmaConfig {
    fn default() -> Self {
        Self {
            aifs_us: 110,
            slot_us: 13,
            cw_max_slots: 15,
            cs_threshold_dbm: -65.0,
        }
    }
}

impl CsmaConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.aifs_us == 0 {
            return Err(ConfigError::invalid("csma.aifs_us", "must be positive"));
        }
        if self.slot_us == 0 {
            return Err(ConfigError::invalid("csma.slot_us", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CsmaPhase {
    Idle,
    WaitAifs,
    Backoff,
    Transmitting,
}

impl fmt::Display for CsmaPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CsmaPhase::Idle => "IDLE",
            CsmaPhase::WaitAifs => "WAIT_AIFS",
            CsmaPhase::Backoff => "BACKOFF",
            CsmaPhase::Transmitting => "TRANSMITTING",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueuedBeacon {
    pub seq: u64,
    pub generated_at: Micros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsmaEvent {
    BeaconReady(QueuedBeacon),
    ChannelBecomesIdle,
    ChannelBecomesBusy,
    AifsElapsed,
    SlotElapsed,
    TxComplete,
}

impl CsmaEvent {
    pub fn name(&self) -> &'static str {
        match self {
            CsmaEvent::BeaconReady(_) => "BEACON_READY",
            CsmaEvent::ChannelBecomesIdle => "CHANNEL_BECOMES_IDLE",
            CsmaEvent::ChannelBecomesBusy => "CHANNEL_BECOMES_BUSY",
            CsmaEvent::AifsElapsed => "AIFS_ELAPSED",
            CsmaEvent::SlotElapsed => "SLOT_ELAPSED",
            CsmaEvent::TxComplete => "TX_COMPLETE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimerKind {
    Aifs,
    Slot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsmaAction {
    StartTx(QueuedBeacon),
    /// Arms a timer; it is only valid while the node's timer epoch still
    /// equals `epoch`.
    ScheduleTimer { kind: TimerKind, delay_us: u64, epoch: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepOutcome {
    pub action: Option<CsmaAction>,
    /// A queued beacon superseded by a fresher one.
    pub dropped: Option<QueuedBeacon>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsmaNodeState {
    phase: CsmaPhase,
    backoff: Option<u32>,
    queued: Option<QueuedBeacon>,
    on_air: Option<QueuedBeacon>,
    channel_busy: bool,
    timer_epoch: u64,
}

impl Default for CsmaNodeState {
    fn default() -> Self {
        Self::new()
    }
}

impl CsmaNodeState {
    pub fn new() -> Self {
        Self {
            phase: CsmaPhase::Idle,
            backoff: None,
            queued: None,
            on_air: None,
            channel_busy: false,
            timer_epoch: 0,
        }
    }

    pub fn phase(&self) -> CsmaPhase {
        self.phase
    }

    pub fn backoff_slots_remaining(&self) -> u32 {
        self.backoff.unwrap_or(0)
    }

    pub fn queued_beacon(&self) -> Option<QueuedBeacon> {
        self.queued
    }

    pub fn beacon_on_air(&self) -> Option<QueuedBeacon> {
        self.on_air
    }

    /// The medium state as last reported to this node.
    pub fn channel_busy(&self) -> bool {
        self.channel_busy
    }

    pub fn timer_is_current(&self, epoch: u64) -> bool {
        self.timer_epoch == epoch
    }

    fn violation(&self, event: &CsmaEvent) -> SimError {
        SimError::StateMachine {
            phase: self.phase.to_string(),
            event: event.name().to_string(),
        }
    }

    fn arm(&mut self, kind: TimerKind, delay_us: u64) -> Option<CsmaAction> {
        self.timer_epoch += 1;
        Some(CsmaAction::ScheduleTimer {
            kind,
            delay_us,
            epoch: self.timer_epoch,
        })
    }

    fn cancel_timer(&mut self) {
        self.timer_epoch += 1;
    }

    fn draw_backoff<R: Rng + ?Sized>(cfg: &CsmaConfig, rng: &mut R) -> u32 {
        rng.random_range(0..=cfg.cw_max_slots)
    }

    fn start_contention<R: Rng + ?Sized>(&mut self, cfg: &CsmaConfig, rng: &mut R) -> Option<CsmaAction> {
        self.phase = CsmaPhase::WaitAifs;
        if self.channel_busy {
            self.backoff = Some(Self::draw_backoff(cfg, rng));
            None
        } else {
            self.backoff = None;
            self.arm(TimerKind::Aifs, cfg.aifs_us)
        }
    }

    fn start_tx(&mut self) -> Option<CsmaAction> {
        self.phase = CsmaPhase::Transmitting;
        self.backoff = None;
        self.on_air = self.queued.take();
        self.on_air.map(CsmaAction::StartTx)
    }
}

/// Advances one node's MAC by one event.
pub fn step<R: Rng + ?Sized>(
    node: &mut CsmaNodeState,
    event: CsmaEvent,
    cfg: &CsmaConfig,
    rng: &mut R,
) -> Result<StepOutcome, SimError> {
    use CsmaPhase::*;
    let mut out = StepOutcome::default();
    match event {
        CsmaEvent::BeaconReady(b) => match node.phase {
            Idle => {
                node.queued = Some(b);
                out.action = node.start_contention(cfg, rng);
            }
            WaitAifs | Backoff | Transmitting => {
                out.dropped = node.queued.replace(b);
            }
        },
        CsmaEvent::ChannelBecomesBusy => {
            if node.channel_busy {
                return Err(node.violation(&event));
            }
            node.channel_busy = true;
            match node.phase {
                WaitAifs => {
                    node.cancel_timer();
                    if node.backoff.is_none() {
                        node.backoff = Some(CsmaNodeState::draw_backoff(cfg, rng));
                    }
                }
                Backoff => {
                    node.cancel_timer();
                    node.phase = WaitAifs;
                }
                Idle | Transmitting => {}
            }
        }
        CsmaEvent::ChannelBecomesIdle => {
            if !node.channel_busy {
                return Err(node.violation(&event));
            }
            node.channel_busy = false;
            match node.phase {
                WaitAifs => out.action = node.arm(TimerKind::Aifs, cfg.aifs_us),
                Backoff => return Err(node.violation(&event)),
                Idle | Transmitting => {}
            }
        }
        CsmaEvent::AifsElapsed => {
            if node.phase != WaitAifs || node.channel_busy {
                return Err(node.violation(&event));
            }
            match node.backoff {
                None | Some(0) => out.action = node.start_tx(),
                Some(_) => {
                    node.phase = Backoff;
                    out.action = node.arm(TimerKind::Slot, cfg.slot_us);
                }
            }
        }
        CsmaEvent::SlotElapsed => {
            if node.phase != Backoff || node.channel_busy {
                return Err(node.violation(&event));
            }
            let left = node.backoff.unwrap_or(0).saturating_sub(1);
            node.backoff = Some(left);
            out.action = if left == 0 {
                node.start_tx()
            } else {
                node.arm(TimerKind::Slot, cfg.slot_us)
            };
        }
        CsmaEvent::TxComplete => {
            if node.phase != Transmitting {
                return Err(node.violation(&event));
            }
            node.on_air = None;
            node.phase = Idle;
            node.backoff = None;
            if node.queued.is_some() {
                out.action = node.start_contention(cfg, rng);
            }
        }
    }
    Ok(out)
}

/// Carrier sense: the linear sum of power received from every other active
/// transmission, compared to the threshold. The node's own transmissions
/// are skipped (it is deaf while transmitting).
pub fn sense_busy(
    node: VehicleId,
    t: Micros,
    active_tx: &[TransmissionEvent],
    channel: &ChannelRealization,
    cfg: &CsmaConfig,
) -> bool {
    let total: f64 = active_tx
        .iter()
        .filter(|e| e.tx_id != node && e.is_active_at(t))
        .map(|e| dbm_to_mw(e.power_dbm + channel.gain_db(e.tx_id, node)))
        .sum();
    total >= dbm_to_mw(cfg.cs_threshold_dbm)
}

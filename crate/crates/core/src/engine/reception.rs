//! Reception adjudication against the set of concurrent transmissions.

use crate::phy::{decode, McsProfile, SinrPolicy};
use crate::propagation::{dbm_to_mw, ChannelRealization};
use crate::scenario::VehicleId;
use crate::transmission::{Airtime, TransmissionEvent};

use super::report::Outcome;

fn rx_mw(e: &TransmissionEvent, rx: VehicleId, channel: &ChannelRealization) -> f64 {
    dbm_to_mw(e.power_dbm + channel.gain_db(e.tx_id, rx))
}

/// Whether `rx` itself transmits while `tx` is on air. In LTE the whole
/// subframe is lost.
pub fn is_half_duplex(rx: VehicleId, tx: &TransmissionEvent, concurrent: &[TransmissionEvent]) -> bool {
    concurrent.iter().any(|c| c.tx_id == rx && c.overlaps(tx))
}

/// Interference power (mW) at `rx` over the airtime of `tx` under the
/// policy: the worst instant, or the time average.
pub fn interference_mw(
    rx: VehicleId,
    tx: &TransmissionEvent,
    concurrent: &[TransmissionEvent],
    channel: &ChannelRealization,
    policy: SinrPolicy,
) -> f64 {
    let others: Vec<&TransmissionEvent> = concurrent
        .iter()
        .filter(|c| c.tx_id != tx.tx_id && c.tx_id != rx && c.interferes_with(tx))
        .collect();
    if matches!(tx.airtime, Airtime::Slot { .. }) {
        return others.iter().map(|c| rx_mw(c, rx, channel)).sum();
    }
    // Piecewise-constant interference between the start and end points.
    let (t0, t1) = (tx.t_start, tx.t_end());
    let mut cuts: Vec<u64> = vec![t0, t1];
    for c in &others {
        cuts.push(c.t_start.clamp(t0, t1));
        cuts.push(c.t_end().clamp(t0, t1));
    }
    cuts.sort_unstable();
    cuts.dedup();
    let mut worst: f64 = 0.0;
    let mut integral = 0.0;
    for w in cuts.windows(2) {
        let level: f64 = others
            .iter()
            .filter(|c| c.is_active_at(w[0]))
            .map(|c| rx_mw(c, rx, channel))
            .sum();
        worst = worst.max(level);
        integral += level * (w[1] - w[0]) as f64;
    }
    match policy {
        SinrPolicy::Worst => worst,
        SinrPolicy::Mean => integral / (t1 - t0) as f64,
    }
}

/// Full outcome of one link. Half-duplex takes precedence over SINR.
pub fn adjudicate(
    rx: VehicleId,
    tx: &TransmissionEvent,
    concurrent: &[TransmissionEvent],
    channel: &ChannelRealization,
    noise_mw: f64,
    mcs: &McsProfile,
    policy: SinrPolicy,
) -> Outcome {
    if rx == tx.tx_id || is_half_duplex(rx, tx, concurrent) {
        return Outcome::LostHalfDuplex;
    }
    let signal = rx_mw(tx, rx, channel);
    let interf = interference_mw(rx, tx, concurrent, channel, policy);
    let sinr_db = 10.0 * (signal / (noise_mw + interf)).log10();
    if decode(sinr_db, mcs) {
        Outcome::Received
    } else {
        Outcome::LostSinr
    }
}

/// Whether `rx` decodes `tx` given everything else on air.
pub fn adjudicate_reception(
    rx: VehicleId,
    tx: &TransmissionEvent,
    concurrent: &[TransmissionEvent],
    channel: &ChannelRealization,
    noise_mw: f64,
    mcs: &McsProfile,
    policy: SinrPolicy,
) -> bool {
    adjudicate(rx, tx, concurrent, channel, noise_mw, mcs, policy) == Outcome::Received
}

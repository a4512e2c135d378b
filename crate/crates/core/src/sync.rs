//! Timeslot-beacon synchronization.
//!
//! The initiator captures its timer `(T_i, C_i)` at radio READY inside every
//! granted timeslot and sends it in a beacon. The receiver captures its own
//! timer `(T_r, C_r)` when the beacon arrives, computes
//! `delta = (C_r - C_i) * T_max + T_r - T_i` and steps its timer by `-delta`.
//!
//! The on-air time of the beacon is a known constant and is removed from
//! `delta`; the remaining one-way latency (radio chain, propagation) is not
//! observable and stays in the residual.

use crate::clock::{LocalClock, TimerValue};
use crate::kernel::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Beacon {
    pub t_i_ticks: u64,
    pub c_i_wraps: u64,
    pub seq: u64,
    pub air_time_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SyncRole {
    Initiator,
    Receiver,
}

/// `(C_r - C_i) * t_max + T_r - T_i`, exact in signed arithmetic.
pub fn compute_offset(beacon: &Beacon, rx: &TimerValue, t_max_ticks: u64) -> i64 {
    let wraps = i128::from(rx.c_wraps) - i128::from(beacon.c_i_wraps);
    let delta = wraps * i128::from(t_max_ticks) + i128::from(rx.t_ticks)
        - i128::from(beacon.t_i_ticks);
    delta as i64
}

/// Known on-air latency expressed in receiver ticks (rounded to the nearest tick).
pub fn latency_ticks(air_time_ns: u64, tick_hz: u64) -> i64 {
    let num = u128::from(air_time_ns) * u128::from(tick_hz);
    ((num + 500_000_000) / 1_000_000_000) as i64
}

#[derive(Debug, Default, Clone)]
pub struct Initiator {
    next_seq: u64,
    tx_count: u64,
}

impl Initiator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tx_count(&self) -> u64 {
        self.tx_count
    }

    /// Radio READY inside a granted slot: capture the timer and emit a beacon.
    pub fn on_tx_slot(
        &mut self,
        clock: &LocalClock,
        oracle: SimTime,
        capture_noise_ns: i64,
        air_time_ns: u64,
    ) -> Beacon {
        let v = clock.capture_with_noise(oracle, capture_noise_ns);
        let beacon = Beacon {
            t_i_ticks: v.t_ticks,
            c_i_wraps: v.c_wraps,
            seq: self.next_seq,
            air_time_ns,
        };
        self.next_seq += 1;
        self.tx_count += 1;
        beacon
    }
}

/// One applied receiver correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorrectionRecord {
    pub seq: u64,
    pub delta_ticks: i64,
    pub oracle: SimTime,
    pub clamped: bool,
}

#[derive(Debug, Default, Clone)]
pub struct Receiver {
    rx_count: u64,
    records: Vec<CorrectionRecord>,
}

impl Receiver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rx_count(&self) -> u64 {
        self.rx_count
    }

    pub fn records(&self) -> &[CorrectionRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<CorrectionRecord> {
        self.records
    }

    pub fn is_synced(&self) -> bool {
        self.rx_count > 0
    }

    /// A beacon was detected at oracle time `arrival`: capture, compute the
    /// offset and step the local timer.
    pub fn on_beacon_received(
        &mut self,
        clock: &mut LocalClock,
        beacon: &Beacon,
        arrival: SimTime,
        capture_noise_ns: i64,
    ) -> CorrectionRecord {
        let t_max = clock.params().t_max_ticks;
        let rx = clock.capture_with_noise(arrival, capture_noise_ns);
        let delta = compute_offset(beacon, &rx, t_max)
            - latency_ticks(beacon.air_time_ns, clock.params().tick_hz);
        let clamped = clock.apply_correction(delta, arrival);
        self.rx_count += 1;
        let record = CorrectionRecord {
            seq: beacon.seq,
            delta_ticks: delta,
            oracle: arrival,
            clamped,
        };
        self.records.push(record);
        record
    }
}

//! Radio timeslot scheduler.
//!
//! Sync timeslots are requested periodically and always yield to protocol
//! traffic. The requested rate is quantized to the scheduler resolution and
//! clamped to the minimum grant spacing. Candidate `k` starts at
//! `k * period + jitter_k`; it is blocked if it (plus the protocol clearance
//! margin) touches a busy interval, and otherwise may still be cancelled when
//! the request rate overloads the scheduler. Blocked or cancelled candidates are
//! not retried early: the next attempt is simply candidate `k + 1`.
//!
//! Random draws are keyed by the candidate index, so two runs that differ only
//! in their occupancy see the same jitter and cancellation draws for every slot.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::kernel::{RngStream, SimTime};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerParams {
    /// Quantization grain of the requested spacing.
    pub resolution_ns: u64,
    /// Minimum spacing between consecutive grants (slot plus turnaround).
    pub min_gap_ns: u64,
    /// Processing cost of one request; the overload knee sits where
    /// `requested_hz * cancel_overhead_ns` reaches one second per second.
    pub cancel_overhead_ns: u64,
    /// Cancellation probability per unit of overload beyond the knee.
    pub overload_slope: f64,
    /// Standard deviation of the grant start jitter.
    pub jitter_sd_ns: f64,
    /// Clearance a timeslot keeps from protocol activity on both sides.
    pub protocol_margin_ns: u64,
}

impl Default for SchedulerParams {
    fn default() -> Self {
        SchedulerParams {
            resolution_ns: 100_000,
            min_gap_ns: 1_000_000,
            // 1e9 / 2300: knee at 2300 Hz
            cancel_overhead_ns: 434_783,
            // reaches 0.2 at 3125 Hz
            overload_slope: 0.5576,
            jitter_sd_ns: 100.0,
            protocol_margin_ns: 2_000_000,
        }
    }
}

impl SchedulerParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.resolution_ns == 0 {
            return Err(ConfigError::new("resolution_ns", "must be > 0"));
        }
        if self.min_gap_ns == 0 {
            return Err(ConfigError::new("min_gap_ns", "must be > 0"));
        }
        if !self.overload_slope.is_finite() || self.overload_slope < 0.0 {
            return Err(ConfigError::new("overload_slope", "must be >= 0"));
        }
        if !self.jitter_sd_ns.is_finite() || self.jitter_sd_ns < 0.0 {
            return Err(ConfigError::new("jitter_sd_ns", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotRequest {
    pub requested_hz: f64,
    pub slot_len_ns: u64,
}

impl SlotRequest {
    pub fn validate(&self, params: &SchedulerParams) -> Result<(), ConfigError> {
        if !(1.0..=1e5).contains(&self.requested_hz) {
            return Err(ConfigError::new(
                "requested_hz",
                format!("must be within [1, 100000] Hz, got {}", self.requested_hz),
            ));
        }
        if self.slot_len_ns == 0 {
            return Err(ConfigError::new("slot_len_ns", "must be > 0"));
        }
        if params.min_gap_ns < self.slot_len_ns {
            return Err(ConfigError::new(
                "min_gap_ns",
                format!(
                    "must be >= slot_len_ns ({}), got {}",
                    self.slot_len_ns, params.min_gap_ns
                ),
            ));
        }
        Ok(())
    }
}

/// Nominal grant period: `1/requested_hz` rounded to the resolution, never
/// shorter than `min_gap_ns`.
pub fn plan_spacing(requested_hz: f64, params: &SchedulerParams) -> u64 {
    let raw = 1e9 / requested_hz;
    let res = params.resolution_ns as f64;
    let steps = (raw / res).round().max(1.0);
    let quantized = (steps * res) as u64;
    quantized.max(params.min_gap_ns)
}

/// Probability that an otherwise free grant is cancelled by scheduler overload.
pub fn cancel_probability(requested_hz: f64, params: &SchedulerParams) -> f64 {
    let load = requested_hz * params.cancel_overhead_ns as f64 / 1e9;
    (params.overload_slope * (load - 1.0)).clamp(0.0, 1.0)
}

/// Half-open busy interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub start: SimTime,
    pub end: SimTime,
}

impl Interval {
    pub fn len_ns(&self) -> u64 {
        self.end.0 - self.start.0
    }
}

/// Sorted, non-overlapping protocol busy intervals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Occupancy {
    intervals: Vec<Interval>,
}

impl Occupancy {
    pub fn new(intervals: Vec<Interval>) -> Result<Self, ConfigError> {
        for w in intervals.windows(2) {
            if w[1].start < w[0].end {
                return Err(ConfigError::new(
                    "occupancy",
                    "intervals must be sorted and non-overlapping",
                ));
            }
        }
        if intervals.iter().any(|i| i.end < i.start) {
            return Err(ConfigError::new("occupancy", "interval ends before it starts"));
        }
        Ok(Occupancy { intervals })
    }

    pub fn empty() -> Self {
        Occupancy::default()
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Whether `[start, end)` overlaps any busy interval.
    pub fn intersects(&self, start: u64, end: u64) -> bool {
        let i = self.intervals.partition_point(|iv| iv.end.0 <= start);
        self.intervals
            .get(i)
            .is_some_and(|iv| iv.start.0 < end && iv.end.0 > start)
    }

    pub fn busy_ns(&self) -> u64 {
        self.intervals.iter().map(Interval::len_ns).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotGrant {
    pub index: u64,
    pub start: SimTime,
    pub len_ns: u64,
    pub jitter_ns: i64,
}

impl SlotGrant {
    pub fn end(&self) -> SimTime {
        SimTime(self.start.0 + self.len_ns)
    }

    pub fn contains(&self, t: SimTime) -> bool {
        self.start <= t && t < self.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotOutcome {
    Granted(SlotGrant),
    Blocked { index: u64, start: SimTime },
    Cancelled { index: u64, start: SimTime },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SlotCounts {
    pub granted: u64,
    pub blocked: u64,
    pub cancelled: u64,
}

#[derive(Debug, Clone)]
pub struct SlotScheduler {
    params: SchedulerParams,
    request: SlotRequest,
    period_ns: u64,
    p_cancel: f64,
    next_index: u64,
    last_grant: Option<SimTime>,
    counts: SlotCounts,
}

impl SlotScheduler {
    pub fn new(params: SchedulerParams, request: SlotRequest) -> Result<Self, ConfigError> {
        params.validate()?;
        request.validate(&params)?;
        Ok(SlotScheduler {
            period_ns: plan_spacing(request.requested_hz, &params),
            p_cancel: cancel_probability(request.requested_hz, &params),
            params,
            request,
            next_index: 1,
            last_grant: None,
            counts: SlotCounts::default(),
        })
    }

    pub fn period_ns(&self) -> u64 {
        self.period_ns
    }

    pub fn cancel_probability(&self) -> f64 {
        self.p_cancel
    }

    pub fn counts(&self) -> SlotCounts {
        self.counts
    }

    pub fn next_index(&self) -> u64 {
        self.next_index
    }

    /// Nominal (unjittered) start of candidate `index`.
    pub fn nominal_start(&self, index: u64) -> u64 {
        index * self.period_ns
    }

    /// Evaluate the next candidate and advance.
    pub fn attempt(&mut self, occupancy: &Occupancy, rng: &RngStream) -> SlotOutcome {
        let index = self.next_index;
        self.next_index += 1;

        let sd = self.params.jitter_sd_ns;
        let jitter = if sd > 0.0 {
            (rng.gaussian_at(2 * index) * sd).round() as i64
        } else {
            0
        };
        let mut start = (self.nominal_start(index) as i64 + jitter).max(0) as u64;
        if let Some(prev) = self.last_grant {
            let floor = prev.0 + self.params.min_gap_ns - (3.0 * sd).floor() as u64;
            start = start.max(floor);
        }
        let len = self.request.slot_len_ns;
        let margin = self.params.protocol_margin_ns;
        let start_t = SimTime(start);

        if occupancy.intersects(start.saturating_sub(margin), start + len + margin) {
            self.counts.blocked += 1;
            return SlotOutcome::Blocked {
                index,
                start: start_t,
            };
        }
        if self.p_cancel > 0.0 && rng.uniform_at(2 * index + 1) < self.p_cancel {
            self.counts.cancelled += 1;
            return SlotOutcome::Cancelled {
                index,
                start: start_t,
            };
        }
        self.counts.granted += 1;
        self.last_grant = Some(start_t);
        SlotOutcome::Granted(SlotGrant {
            index,
            start: start_t,
            len_ns: len,
            jitter_ns: start as i64 - self.nominal_start(index) as i64,
        })
    }

    /// Attempt candidates until one is granted or the nominal start passes `horizon`.
    pub fn next_grant(
        &mut self,
        occupancy: &Occupancy,
        rng: &RngStream,
        horizon: SimTime,
    ) -> Option<SlotGrant> {
        while self.nominal_start(self.next_index) <= horizon.0 {
            if let SlotOutcome::Granted(g) = self.attempt(occupancy, rng) {
                return Some(g);
            }
        }
        None
    }
}

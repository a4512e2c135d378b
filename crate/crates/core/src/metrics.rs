//! Sync error sampling, packet counters and the duty-cycle energy model.
//!
//! Sync error is measured the way a scope measures two GPIO edges: both nodes
//! fire a compare event on the same corrected tick value and the error is the
//! oracle time between the two events (receiver minus initiator).

use serde::{Deserialize, Serialize};

use crate::clock::LocalClock;
use crate::error::ConfigError;
use crate::kernel::SimTime;
use crate::scheduler::SlotGrant;
use crate::sync::CorrectionRecord;

/// Signed delay between the two nodes' next compare events on a shared value.
pub fn sample_error(initiator: &LocalClock, receiver: &LocalClock, oracle: SimTime) -> i64 {
    let next = initiator
        .absolute_ticks(oracle)
        .max(receiver.absolute_ticks(oracle))
        + 1;
    receiver.edge_time(next).0 as i64 - initiator.edge_time(next).0 as i64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyParams {
    pub p_idle_mw: f64,
    pub p_tx_mw: f64,
    pub p_rx_mw: f64,
    /// Transmitter on-time per beacon.
    pub tx_on_ns: u64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            p_idle_mw: 5.0,
            p_tx_mw: 25.0,
            p_rx_mw: 20.0,
            tx_on_ns: 400_000,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("p_idle_mw", self.p_idle_mw),
            ("p_tx_mw", self.p_tx_mw),
            ("p_rx_mw", self.p_rx_mw),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(ConfigError::new(name, format!("must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Time a node spent in each radio mode; whatever is left is idle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ModeTimeline {
    pub total_ns: u64,
    pub tx_ns: u64,
    pub rx_ns: u64,
}

impl ModeTimeline {
    pub fn idle_ns(&self) -> u64 {
        self.total_ns.saturating_sub(self.tx_ns + self.rx_ns)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NodeEnergy {
    pub avg_power_mw: f64,
    pub joules: f64,
}

pub fn accumulate_energy(timeline: &ModeTimeline, params: &EnergyParams) -> NodeEnergy {
    if timeline.total_ns == 0 {
        return NodeEnergy {
            avg_power_mw: params.p_idle_mw,
            joules: 0.0,
        };
    }
    // mW * ns = 1e-12 J
    let mw_ns = params.p_idle_mw * timeline.idle_ns() as f64
        + params.p_tx_mw * timeline.tx_ns as f64
        + params.p_rx_mw * timeline.rx_ns as f64;
    NodeEnergy {
        avg_power_mw: mw_ns / timeline.total_ns as f64,
        joules: mw_ns * 1e-12,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub oracle_ns: u64,
    pub error_ns: i64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Warnings {
    /// Corrections clamped because they would have made the timer negative.
    pub clamped_corrections: u64,
    /// Compare ticks skipped because the receiver had not synced yet.
    pub unsynced_samples: u64,
}

/// Cumulative counters captured once per simulated second.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterSnapshot {
    pub oracle_ns: u64,
    pub tx_count: u64,
    pub rx_count: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub duration_ns: u64,
    pub error_samples: Vec<ErrorSample>,
    pub tx_count: u64,
    pub rx_count: u64,
    /// Beacons the channel let through (reception may still require a receiver slot).
    pub delivered_count: u64,
    pub blocked_count: u64,
    pub cancelled_count: u64,
    pub granted: Vec<SlotGrant>,
    pub corrections: Vec<CorrectionRecord>,
    pub connection_events: u64,
    pub counters: Vec<CounterSnapshot>,
    pub initiator_timeline: ModeTimeline,
    pub receiver_timeline: ModeTimeline,
    pub initiator_energy: NodeEnergy,
    pub receiver_energy: NodeEnergy,
    pub warnings: Warnings,
}

impl RunMetrics {
    pub fn effective_tx_rate_hz(&self) -> f64 {
        if self.duration_ns == 0 {
            0.0
        } else {
            self.tx_count as f64 * 1e9 / self.duration_ns as f64
        }
    }

    pub fn delivery_ratio(&self) -> f64 {
        if self.tx_count == 0 {
            0.0
        } else {
            self.rx_count as f64 / self.tx_count as f64
        }
    }

    /// Largest oracle gap between consecutive applied corrections.
    pub fn max_correction_gap_ns(&self) -> u64 {
        self.corrections
            .windows(2)
            .map(|w| w[1].oracle.0 - w[0].oracle.0)
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub samples: usize,
    pub mean_abs_ns: f64,
    pub sd_abs_ns: f64,
    pub p95_abs_ns: f64,
    pub max_abs_ns: f64,
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile_sorted(sorted: &[u64], q: f64) -> u64 {
    assert!(!sorted.is_empty());
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn error_stats(samples: &[ErrorSample]) -> Option<ErrorStats> {
    if samples.is_empty() {
        return None;
    }
    let mut abs: Vec<u64> = samples.iter().map(|s| s.error_ns.unsigned_abs()).collect();
    abs.sort_unstable();
    let n = abs.len() as f64;
    let mean = abs.iter().map(|&a| a as f64).sum::<f64>() / n;
    let var = if abs.len() > 1 {
        abs.iter().map(|&a| (a as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some(ErrorStats {
        samples: abs.len(),
        mean_abs_ns: mean,
        sd_abs_ns: var.sqrt(),
        p95_abs_ns: percentile_sorted(&abs, 0.95) as f64,
        max_abs_ns: *abs.last().unwrap() as f64,
    })
}

/// One summary row for a finished run. `error` is `None` for a run that never
/// produced an error sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub error: Option<ErrorStats>,
    pub tx_count: u64,
    pub rx_count: u64,
    pub blocked_count: u64,
    pub cancelled_count: u64,
    pub initiator_avg_mw: f64,
    pub receiver_avg_mw: f64,
    pub initiator_joules: f64,
    pub receiver_joules: f64,
    pub clamped_corrections: u64,
}

pub fn summarize(m: &RunMetrics) -> Summary {
    Summary {
        error: error_stats(&m.error_samples),
        tx_count: m.tx_count,
        rx_count: m.rx_count,
        blocked_count: m.blocked_count,
        cancelled_count: m.cancelled_count,
        initiator_avg_mw: m.initiator_energy.avg_power_mw,
        receiver_avg_mw: m.receiver_energy.avg_power_mw,
        initiator_joules: m.initiator_energy.joules,
        receiver_joules: m.receiver_energy.joules,
        clamped_corrections: m.warnings.clamped_corrections,
    }
}

//! BLE connection-event occupancy.
//!
//! Each connection interval starts with a connection event that holds the
//! radio for `event_duration`: a fixed cost for the empty poll exchange plus
//! the airtime needed to carry one interval's worth of application data. The
//! event never takes the whole interval; `guard_ns` is always left free.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::kernel::{RngStream, SimTime};
use crate::scheduler::{Interval, Occupancy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BleRole {
    Central,
    Peripheral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConnectionParams {
    /// When false no protocol stack runs and the radio is always free.
    pub enabled: bool,
    pub interval_ms: f64,
    /// BLE role of the node that initiates sync; the sync layer ignores it.
    pub initiator_role: BleRole,
    /// Standard deviation of each connection event's anchor.
    pub anchor_jitter_ns: f64,
}

impl Default for ConnectionParams {
    fn default() -> Self {
        ConnectionParams {
            enabled: false,
            interval_ms: 50.0,
            initiator_role: BleRole::Central,
            anchor_jitter_ns: 300_000.0,
        }
    }
}

impl ConnectionParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(7.5..=4000.0).contains(&self.interval_ms) {
            return Err(ConfigError::new(
                "interval_ms",
                format!(
                    "must be within [7.5, 4000] ms, got {}",
                    self.interval_ms
                ),
            ));
        }
        if !self.anchor_jitter_ns.is_finite() || self.anchor_jitter_ns < 0.0 {
            return Err(ConfigError::new("anchor_jitter_ns", "must be >= 0"));
        }
        Ok(())
    }

    pub fn interval_ns(&self) -> u64 {
        (self.interval_ms * 1e6).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppTraffic {
    pub throughput_kbps: f64,
    pub phy_rate_bps: f64,
    /// Duration of an empty connection event (one packet pair).
    pub per_event_overhead_ns: u64,
    /// Payload bits per bit of airtime, in (0, 1].
    pub efficiency: f64,
    /// Radio time always left free at the end of each interval.
    pub guard_ns: u64,
}

impl Default for AppTraffic {
    fn default() -> Self {
        AppTraffic {
            throughput_kbps: 0.0,
            phy_rate_bps: 2_000_000.0,
            per_event_overhead_ns: 300_000,
            efficiency: 0.6,
            guard_ns: 5_000_000,
        }
    }
}

impl AppTraffic {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.throughput_kbps.is_finite() || self.throughput_kbps < 0.0 {
            return Err(ConfigError::new("throughput_kbps", "must be >= 0"));
        }
        if !self.phy_rate_bps.is_finite() || self.phy_rate_bps <= 0.0 {
            return Err(ConfigError::new("phy_rate_bps", "must be > 0"));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(ConfigError::new(
                "efficiency",
                format!("must be within (0, 1], got {}", self.efficiency),
            ));
        }
        let capacity = self.phy_rate_bps * self.efficiency;
        if self.throughput_kbps * 1000.0 > capacity {
            return Err(ConfigError::new(
                "throughput_kbps",
                format!(
                    "offered load {} kbps exceeds link capacity {} kbps (phy_rate_bps * efficiency)",
                    self.throughput_kbps,
                    capacity / 1000.0
                ),
            ));
        }
        Ok(())
    }

    /// Airtime needed to carry `interval_ns` worth of application data.
    pub fn payload_airtime_ns(&self, interval_ns: u64) -> f64 {
        let bits = self.throughput_kbps * 1000.0 * interval_ns as f64 / 1e9;
        bits / (self.phy_rate_bps * self.efficiency) * 1e9
    }
}

/// Radio time held by one connection event.
pub fn event_duration(traffic: &AppTraffic, conn: &ConnectionParams) -> Result<u64, ConfigError> {
    traffic.validate().map_err(|e| e.within("traffic"))?;
    conn.validate().map_err(|e| e.within("connection"))?;
    let interval = conn.interval_ns();
    let wanted = traffic.per_event_overhead_ns as f64 + traffic.payload_airtime_ns(interval);
    let cap = interval.saturating_sub(traffic.guard_ns);
    Ok((wanted.round() as u64).min(cap))
}

/// Fraction of each interval the stack holds the radio.
pub fn occupancy_fraction(traffic: &AppTraffic, conn: &ConnectionParams) -> Result<f64, ConfigError> {
    Ok(event_duration(traffic, conn)? as f64 / conn.interval_ns() as f64)
}

/// Busy intervals for every connection interval that fits inside `[0, horizon)`.
///
/// Anchor `k` is at `k * interval + jitter_k`; jitter draws are keyed by `k`.
/// A jittered event that would overlap its predecessor is pushed back to the
/// predecessor's end.
pub fn occupancy_stream(
    conn: &ConnectionParams,
    traffic: &AppTraffic,
    horizon: SimTime,
    rng: &RngStream,
) -> Result<Occupancy, ConfigError> {
    let duration = event_duration(traffic, conn)?;
    let interval = conn.interval_ns();
    let mut out: Vec<Interval> = Vec::new();
    let mut k = 0u64;
    loop {
        let nominal = k * interval;
        if nominal + interval > horizon.0 {
            break;
        }
        let jitter = if conn.anchor_jitter_ns > 0.0 {
            (rng.gaussian_at(k) * conn.anchor_jitter_ns).round() as i64
        } else {
            0
        };
        let mut start = (nominal as i64 + jitter).max(0) as u64;
        if let Some(prev) = out.last() {
            start = start.max(prev.end.0);
        }
        let end = start + duration;
        if end <= horizon.0 {
            out.push(Interval {
                start: SimTime(start),
                end: SimTime(end),
            });
        }
        k += 1;
    }
    Occupancy::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::stream;
    use proptest::prelude::*;

    fn conn(interval_ms: f64) -> ConnectionParams {
        ConnectionParams {
            enabled: true,
            interval_ms,
            anchor_jitter_ns: 0.0,
            ..ConnectionParams::default()
        }
    }

    fn traffic(kbps: f64) -> AppTraffic {
        AppTraffic {
            throughput_kbps: kbps,
            ..AppTraffic::default()
        }
    }

    #[test]
    fn empty_event_is_overhead_only() {
        assert_eq!(event_duration(&traffic(0.0), &conn(50.0)).unwrap(), 300_000);
    }

    #[test]
    fn explicit_efficiency_example() {
        // 1200 kbps over 50 ms on 2 Mbps at 0.75: 60 kbit / 1.5 Mbps = 40 ms.
        let t = AppTraffic {
            throughput_kbps: 1200.0,
            efficiency: 0.75,
            ..AppTraffic::default()
        };
        let d = event_duration(&t, &conn(50.0)).unwrap();
        assert_eq!(d, 40_300_000);
        assert!((d as f64 / 50e6 - 0.806).abs() < 1e-9);
    }

    #[test]
    fn saturated_link_keeps_guard() {
        let t = traffic(1200.0);
        let d = event_duration(&t, &conn(50.0)).unwrap();
        assert_eq!(d, 50_000_000 - t.guard_ns);
    }

    #[test]
    fn long_interval_idle_fraction() {
        let f = occupancy_fraction(&traffic(0.0), &conn(4000.0)).unwrap();
        assert!((f - 0.000_075).abs() < 1e-12);
    }

    #[test]
    fn event_counts_over_one_second() {
        let rng = stream("traffic", 1).unwrap();
        let one_s = SimTime(1_000_000_000);
        let occ = occupancy_stream(&conn(50.0), &traffic(0.0), one_s, &rng).unwrap();
        assert_eq!(occ.len(), 20);
        let occ = occupancy_stream(&conn(7.5), &traffic(0.0), one_s, &rng).unwrap();
        assert_eq!(occ.len(), 133);
    }

    #[test]
    fn zero_jitter_anchors_are_periodic() {
        let rng = stream("traffic", 1).unwrap();
        let occ = occupancy_stream(&conn(30.0), &traffic(100.0), SimTime(1_000_000_000), &rng)
            .unwrap();
        for (k, iv) in occ.intervals().iter().enumerate() {
            assert_eq!(iv.start.0, k as u64 * 30_000_000);
        }
    }

    #[test]
    fn jittered_stream_stays_sorted() {
        let rng = stream("traffic", 3).unwrap();
        let c = ConnectionParams {
            anchor_jitter_ns: 2_000_000.0,
            ..conn(7.5)
        };
        let occ = occupancy_stream(&c, &traffic(300.0), SimTime(5_000_000_000), &rng).unwrap();
        for w in occ.intervals().windows(2) {
            assert!(w[0].end <= w[1].start);
        }
    }

    #[test]
    fn interval_bounds_and_feasibility() {
        let err = event_duration(&traffic(0.0), &conn(5.0)).unwrap_err();
        assert_eq!(err.field, "connection.interval_ms");
        assert!(err.message.contains("7.5"));
        let one_mbps = AppTraffic {
            throughput_kbps: 1200.0,
            phy_rate_bps: 1_000_000.0,
            ..AppTraffic::default()
        };
        assert_eq!(one_mbps.validate().unwrap_err().field, "throughput_kbps");
    }

    #[test]
    fn load_is_carried_within_one_event() {
        // Offered bits per second vs bits carried by the events of one second,
        // for every load the guarded event can still hold.
        for kbps in [0.0, 50.0, 200.0, 400.0, 800.0, 1000.0] {
            for interval in [7.5, 50.0, 100.0, 4000.0] {
                let t = traffic(kbps);
                let c = conn(interval);
                let d = event_duration(&t, &c).unwrap();
                if d == c.interval_ns() - t.guard_ns {
                    continue;
                }
                let per_event = (d.saturating_sub(t.per_event_overhead_ns)) as f64 / 1e9
                    * t.phy_rate_bps
                    * t.efficiency;
                let events_per_s = 1e9 / c.interval_ns() as f64;
                let carried = per_event * events_per_s;
                let offered = kbps * 1000.0;
                let one_event_bits = offered / events_per_s;
                assert!(
                    (carried - offered).abs() <= one_event_bits + 1.0,
                    "{kbps} kbps @ {interval} ms: carried {carried} offered {offered}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn fraction_monotone_in_throughput(a in 0.0f64..1200.0, b in 0.0f64..1200.0, interval in 7.5f64..4000.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let c = conn(interval);
            prop_assert!(occupancy_fraction(&traffic(lo), &c).unwrap() <= occupancy_fraction(&traffic(hi), &c).unwrap());
        }

        #[test]
        fn idle_fraction_decreasing_in_interval(a in 7.5f64..4000.0, b in 7.5f64..4000.0) {
            prop_assume!((a - b).abs() > 1e-3);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let t = traffic(0.0);
            prop_assert!(occupancy_fraction(&t, &conn(lo)).unwrap() > occupancy_fraction(&t, &conn(hi)).unwrap());
        }
    }
}

//! Local oscillator and dual hardware timer of a node.
//!
//! A node counts ticks of its own (drifting) oscillator. The count is exposed
//! the way the hardware does it: a fine timer `T` that wraps at `t_max_ticks`
//! and a wrap counter `C`, so the absolute count is `C * t_max + T`.
//!
//! All conversions between oracle time and ticks are exact integer arithmetic
//! in `i128`: drift is held in parts per trillion, so
//! `ticks = floor(((1e12 + drift_ppt) * oracle_ns + 1e12 * phase0_ns) * tick_hz / 1e21)`.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::kernel::{RngStream, SimTime};

const PPT: i128 = 1_000_000_000_000;
const NS_PER_S: i128 = 1_000_000_000;
const DEN: i128 = PPT * NS_PER_S;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClockParams {
    /// Frequency error of the oscillator, parts per million (positive runs fast).
    pub drift_ppm: f64,
    /// Standard deviation of the per-capture timestamp noise, ns.
    pub capture_jitter_sd_ns: f64,
    pub tick_hz: u64,
    /// Wrap period of the fine timer, in ticks.
    pub t_max_ticks: u64,
    /// Initial phase of the local clock against oracle time, ns.
    pub phase0_ns: u64,
}

impl Default for ClockParams {
    fn default() -> Self {
        ClockParams {
            drift_ppm: 0.0,
            capture_jitter_sd_ns: 0.0,
            tick_hz: 16_000_000,
            t_max_ticks: 65_536,
            phase0_ns: 0,
        }
    }
}

impl ClockParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.tick_hz == 0 {
            return Err(ConfigError::new("tick_hz", "must be > 0"));
        }
        if self.tick_hz > 4_000_000_000 {
            return Err(ConfigError::new("tick_hz", "must be <= 4 GHz"));
        }
        if self.t_max_ticks < 2 {
            return Err(ConfigError::new(
                "t_max_ticks",
                format!("must be >= 2, got {}", self.t_max_ticks),
            ));
        }
        if !self.drift_ppm.is_finite() || self.drift_ppm.abs() >= 1000.0 {
            return Err(ConfigError::new(
                "drift_ppm",
                format!("must satisfy |drift_ppm| < 1000, got {}", self.drift_ppm),
            ));
        }
        if !self.capture_jitter_sd_ns.is_finite() || self.capture_jitter_sd_ns < 0.0 {
            return Err(ConfigError::new(
                "capture_jitter_sd_ns",
                format!("must be >= 0, got {}", self.capture_jitter_sd_ns),
            ));
        }
        if self.phase0_ns > 1_000_000_000_000 {
            return Err(ConfigError::new("phase0_ns", "must be <= 1000 s"));
        }
        Ok(())
    }

    /// Duration of one tick in ns.
    pub fn tick_ns(&self) -> f64 {
        1e9 / self.tick_hz as f64
    }
}

/// Snapshot of the dual timer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TimerValue {
    /// Fine timer, always in `[0, t_max_ticks)`.
    pub t_ticks: u64,
    pub c_wraps: u64,
    /// Cumulative correction applied so far (signed ticks).
    pub corr_ticks: i64,
}

impl TimerValue {
    pub fn from_absolute(absolute: u64, t_max_ticks: u64, corr_ticks: i64) -> Self {
        TimerValue {
            t_ticks: absolute % t_max_ticks,
            c_wraps: absolute / t_max_ticks,
            corr_ticks,
        }
    }

    pub fn absolute(&self, t_max_ticks: u64) -> u64 {
        self.c_wraps * t_max_ticks + self.t_ticks
    }

    /// `T <- T - delta` with borrow/carry into the wrap counter.
    ///
    /// Returns the new value and whether the result had to be clamped at zero.
    pub fn corrected(&self, delta_ticks: i64, t_max_ticks: u64) -> (TimerValue, bool) {
        let abs = i128::from(self.absolute(t_max_ticks)) - i128::from(delta_ticks);
        let clamped = abs < 0;
        let abs = abs.max(0) as u64;
        let applied = i128::from(self.absolute(t_max_ticks)) - i128::from(abs);
        let corr = i128::from(self.corr_ticks) - applied;
        (
            TimerValue::from_absolute(abs, t_max_ticks, corr as i64),
            clamped,
        )
    }
}

/// A node's oscillator plus its corrected hardware timer.
#[derive(Debug, Clone)]
pub struct LocalClock {
    params: ClockParams,
    rate_num: i128,
    offset_num: i128,
    corr_ticks: i64,
    clamped_corrections: u64,
}

impl LocalClock {
    pub fn new(params: ClockParams) -> Result<Self, ConfigError> {
        params.validate()?;
        let drift_ppt = (params.drift_ppm * 1e6).round() as i128;
        let hz = i128::from(params.tick_hz);
        Ok(LocalClock {
            rate_num: (PPT + drift_ppt) * hz,
            offset_num: PPT * i128::from(params.phase0_ns) * hz,
            corr_ticks: 0,
            clamped_corrections: 0,
            params,
        })
    }

    pub fn params(&self) -> &ClockParams {
        &self.params
    }

    pub fn corr_ticks(&self) -> i64 {
        self.corr_ticks
    }

    /// Number of corrections that would have driven the count below zero.
    pub fn clamped_corrections(&self) -> u64 {
        self.clamped_corrections
    }

    /// Uncorrected oscillator ticks at `oracle`.
    fn raw_ticks(&self, oracle: SimTime) -> i128 {
        (self.rate_num * i128::from(oracle.0) + self.offset_num).div_euclid(DEN)
    }

    /// Corrected absolute tick count at `oracle`.
    pub fn absolute_ticks(&self, oracle: SimTime) -> u64 {
        (self.raw_ticks(oracle) + i128::from(self.corr_ticks)).max(0) as u64
    }

    pub fn read(&self, oracle: SimTime) -> TimerValue {
        TimerValue::from_absolute(
            self.absolute_ticks(oracle),
            self.params.t_max_ticks,
            self.corr_ticks,
        )
    }

    /// Hardware capture at `oracle` displaced by `noise_ns`.
    pub fn capture_with_noise(&self, oracle: SimTime, noise_ns: i64) -> TimerValue {
        let t = (oracle.0 as i64).saturating_add(noise_ns).max(0) as u64;
        self.read(SimTime(t))
    }

    /// Hardware capture with gaussian timestamp noise drawn from `rng`.
    pub fn capture(&self, oracle: SimTime, rng: &mut RngStream) -> TimerValue {
        let noise = self.noise_ns(rng.gaussian());
        self.capture_with_noise(oracle, noise)
    }

    /// Scale a standard-normal draw to this clock's capture jitter, in whole ns.
    pub fn noise_ns(&self, standard_normal: f64) -> i64 {
        if self.params.capture_jitter_sd_ns == 0.0 {
            0
        } else {
            (standard_normal * self.params.capture_jitter_sd_ns).round() as i64
        }
    }

    /// `T <- T - delta`. A correction that would make the count negative at
    /// `oracle` is clamped so the count is exactly zero; returns whether that happened.
    pub fn apply_correction(&mut self, delta_ticks: i64, oracle: SimTime) -> bool {
        let raw = self.raw_ticks(oracle);
        let mut corr = i128::from(self.corr_ticks) - i128::from(delta_ticks);
        let clamped = raw + corr < 0;
        if clamped {
            corr = -raw;
            self.clamped_corrections += 1;
        }
        self.corr_ticks = corr as i64;
        clamped
    }

    /// Earliest oracle instant at which the corrected count reaches `ticks`,
    /// i.e. when a compare event on that value fires.
    pub fn edge_time(&self, ticks: u64) -> SimTime {
        let target = i128::from(ticks) - i128::from(self.corr_ticks);
        if target <= self.raw_ticks(SimTime::ZERO) {
            return SimTime::ZERO;
        }
        let num = target * DEN - self.offset_num;
        let t = (num + self.rate_num - 1).div_euclid(self.rate_num);
        SimTime(t.max(0) as u64)
    }
}

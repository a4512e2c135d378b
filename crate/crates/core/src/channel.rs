//! Link model: RSSI-driven beacon delivery and arrival timing.
//!
//! Delivery is i.i.d. Bernoulli with a logistic success curve in RSSI. The
//! curve is a composite: it lumps demodulation failures and every other reason
//! a transmitted beacon is not picked up by the receiver into one probability.
//! RSSI can be given directly or derived from distance with a log-distance
//! path-loss model.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::kernel::{RngStream, SimTime};

/// Speed of light, metres per nanosecond.
pub const LIGHT_M_PER_NS: f64 = 0.299_792_458;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuccessCurve {
    pub midpoint_dbm: f64,
    pub slope_per_db: f64,
    pub floor: f64,
    pub ceiling: f64,
}

impl Default for SuccessCurve {
    /// Fitted so that p(-40 dBm) = 0.55 and p(-80 dBm) = 0.017.
    fn default() -> Self {
        SuccessCurve {
            midpoint_dbm: -58.15,
            slope_per_db: 0.1602,
            floor: 0.0,
            ceiling: 0.58,
        }
    }
}

impl SuccessCurve {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.floor)
            || !(0.0..=1.0).contains(&self.ceiling)
            || self.floor > self.ceiling
        {
            return Err(ConfigError::new(
                "ceiling",
                format!(
                    "need 0 <= floor <= ceiling <= 1, got floor {} ceiling {}",
                    self.floor, self.ceiling
                ),
            ));
        }
        if !self.slope_per_db.is_finite() || self.slope_per_db <= 0.0 {
            return Err(ConfigError::new("slope_per_db", "must be > 0"));
        }
        if !self.midpoint_dbm.is_finite() {
            return Err(ConfigError::new("midpoint_dbm", "must be finite"));
        }
        Ok(())
    }

    pub fn probability(&self, rssi_dbm: f64) -> f64 {
        let x = self.slope_per_db * (rssi_dbm - self.midpoint_dbm);
        self.floor + (self.ceiling - self.floor) / (1.0 + (-x).exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationParams {
    pub tx_power_dbm: f64,
    /// Path loss at the reference distance `d0_m`.
    pub pl0_db: f64,
    pub d0_m: f64,
    pub path_loss_exponent: f64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        PropagationParams {
            tx_power_dbm: 0.0,
            pl0_db: 40.0,
            d0_m: 1.0,
            path_loss_exponent: 2.2,
        }
    }
}

impl PropagationParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.d0_m.is_finite() || self.d0_m <= 0.0 {
            return Err(ConfigError::new("d0_m", "must be > 0"));
        }
        if !self.path_loss_exponent.is_finite() || self.path_loss_exponent <= 0.0 {
            return Err(ConfigError::new("path_loss_exponent", "must be > 0"));
        }
        Ok(())
    }
}

/// Log-distance path loss: `tx_power - pl0 - 10 n log10(d / d0)`.
pub fn rssi_from_distance(prop: &PropagationParams, d_m: f64) -> Result<f64, ConfigError> {
    if !d_m.is_finite() || d_m <= 0.0 {
        return Err(ConfigError::new(
            "distance_m",
            format!("must be > 0, got {d_m}"),
        ));
    }
    Ok(prop.tx_power_dbm - prop.pl0_db - 10.0 * prop.path_loss_exponent * (d_m / prop.d0_m).log10())
}

/// One-way propagation delay over `d_m` metres, rounded to whole ns.
pub fn propagation_delay_ns(d_m: f64) -> u64 {
    (d_m / LIGHT_M_PER_NS).round() as u64
}

pub fn arrival_time(tx_ready: SimTime, air_time_ns: u64, path_bias_ns: u64) -> SimTime {
    SimTime(tx_ready.0 + air_time_ns + path_bias_ns)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    pub rssi_dbm: f64,
    pub curve: SuccessCurve,
}

impl ChannelModel {
    pub fn new(rssi_dbm: f64, curve: SuccessCurve) -> Result<Self, ConfigError> {
        curve.validate()?;
        if !rssi_dbm.is_finite() {
            return Err(ConfigError::new("rssi_dbm", "must be finite"));
        }
        Ok(ChannelModel { rssi_dbm, curve })
    }

    pub fn success_probability(&self) -> f64 {
        self.curve.probability(self.rssi_dbm)
    }

    /// Sequential Bernoulli draw.
    pub fn packet_success(&self, rng: &mut RngStream) -> bool {
        rng.uniform() < self.success_probability()
    }

    /// Bernoulli draw keyed by the beacon's slot index.
    pub fn delivered_at(&self, index: u64, rng: &RngStream) -> bool {
        rng.uniform_at(index) < self.success_probability()
    }
}

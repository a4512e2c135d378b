//! Run configuration: a TOML file with one table per model component.
//!
//! Every table is optional and falls back to the defaults below. `validate`
//! checks each component's invariants before anything is simulated and names
//! the offending entry as `section.field`.

use serde::{Deserialize, Serialize};

use crate::channel::{self, PropagationParams, SuccessCurve};
use crate::clock::ClockParams;
use crate::error::{ConfigError, Error};
use crate::metrics::EnergyParams;
use crate::scheduler::{SchedulerParams, SlotRequest};
use crate::traffic::{self, AppTraffic, ConnectionParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyncParams {
    pub requested_hz: f64,
    pub slot_len_ns: u64,
    /// On-air duration of a beacon; known to both ends and compensated.
    pub air_time_ns: u64,
    /// Delay from timeslot start to radio READY, where the initiator captures.
    pub ramp_up_ns: u64,
    /// Radio-chain latency added to every arrival and never compensated.
    pub path_bias_ns: u64,
    /// Receiver listens all the time instead of only inside its own timeslots.
    pub rx_continuous: bool,
}

impl Default for SyncParams {
    fn default() -> Self {
        SyncParams {
            requested_hz: 1000.0,
            slot_len_ns: 500_000,
            air_time_ns: 128_000,
            ramp_up_ns: 40_000,
            path_bias_ns: 10,
            rx_continuous: true,
        }
    }
}

impl SyncParams {
    pub fn request(&self) -> SlotRequest {
        SlotRequest {
            requested_hz: self.requested_hz,
            slot_len_ns: self.slot_len_ns,
        }
    }

    pub fn validate(&self, scheduler: &SchedulerParams) -> Result<(), ConfigError> {
        self.request().validate(scheduler).map_err(|e| {
            if e.field == "min_gap_ns" {
                e.within("scheduler")
            } else {
                e
            }
        })?;
        if self.ramp_up_ns + self.air_time_ns > self.slot_len_ns {
            return Err(ConfigError::new(
                "air_time_ns",
                format!(
                    "ramp_up_ns + air_time_ns ({}) must fit inside slot_len_ns ({})",
                    self.ramp_up_ns + self.air_time_ns,
                    self.slot_len_ns
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    /// Fixed link RSSI. Mutually exclusive with `distance_m`; when neither is
    /// set the link runs at `DEFAULT_RSSI_DBM`.
    pub rssi_dbm: Option<f64>,
    /// Node separation; RSSI then follows the path-loss model and the
    /// propagation delay is added to the uncompensated bias.
    pub distance_m: Option<f64>,
    pub curve: SuccessCurve,
    pub propagation: PropagationParams,
}

pub const DEFAULT_RSSI_DBM: f64 = -40.0;

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.curve.validate().map_err(|e| e.within("curve"))?;
        self.propagation
            .validate()
            .map_err(|e| e.within("propagation"))?;
        match (self.rssi_dbm, self.distance_m) {
            (Some(_), Some(_)) => Err(ConfigError::new(
                "distance_m",
                "set either rssi_dbm or distance_m, not both",
            )),
            (Some(r), None) if !r.is_finite() => {
                Err(ConfigError::new("rssi_dbm", "must be finite"))
            }
            (None, Some(d)) => channel::rssi_from_distance(&self.propagation, d).map(|_| ()),
            _ => Ok(()),
        }
    }

    pub fn effective_rssi_dbm(&self) -> Result<f64, ConfigError> {
        match (self.rssi_dbm, self.distance_m) {
            (Some(r), None) => Ok(r),
            (None, Some(d)) => channel::rssi_from_distance(&self.propagation, d),
            (None, None) => Ok(DEFAULT_RSSI_DBM),
            (Some(_), Some(_)) => Err(ConfigError::new(
                "distance_m",
                "set either rssi_dbm or distance_m, not both",
            )),
        }
    }

    pub fn propagation_delay_ns(&self) -> u64 {
        self.distance_m.map_or(0, channel::propagation_delay_ns)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsParams {
    /// Rate of the shared compare events used to sample sync error.
    pub compare_hz: f64,
    /// Place each compare event uniformly at random inside its period instead
    /// of on a fixed grid, so the cadence cannot alias with the beacon period.
    pub stratified: bool,
}

impl Default for MetricsParams {
    fn default() -> Self {
        MetricsParams {
            compare_hz: 100.0,
            stratified: true,
        }
    }
}

impl MetricsParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.compare_hz > 0.0 && self.compare_hz <= 1e6) {
            return Err(ConfigError::new(
                "compare_hz",
                format!("must be within (0, 1e6], got {}", self.compare_hz),
            ));
        }
        Ok(())
    }

    pub fn period_ns(&self) -> u64 {
        (1e9 / self.compare_hz).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputParams {
    pub out_dir: String,
    pub error_trace: bool,
}

impl Default for OutputParams {
    fn default() -> Self {
        OutputParams {
            out_dir: "out".to_owned(),
            error_trace: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub duration_s: f64,
    pub initiator: ClockParams,
    pub receiver: ClockParams,
    pub sync: SyncParams,
    pub scheduler: SchedulerParams,
    pub channel: ChannelConfig,
    pub connection: ConnectionParams,
    pub traffic: AppTraffic,
    pub energy: EnergyParams,
    pub metrics: MetricsParams,
    pub output: OutputParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            duration_s: 60.0,
            initiator: ClockParams {
                drift_ppm: 10.0,
                capture_jitter_sd_ns: 5.0,
                ..ClockParams::default()
            },
            receiver: ClockParams {
                drift_ppm: 20.0,
                capture_jitter_sd_ns: 5.0,
                phase0_ns: 3_000_031,
                ..ClockParams::default()
            },
            sync: SyncParams::default(),
            scheduler: SchedulerParams::default(),
            channel: ChannelConfig::default(),
            connection: ConnectionParams::default(),
            traffic: AppTraffic::default(),
            energy: EnergyParams::default(),
            metrics: MetricsParams::default(),
            output: OutputParams::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Canonical TOML: every field present, fixed order.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn duration_ns(&self) -> u64 {
        (self.duration_s * 1e9).round() as u64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.duration_s.is_finite() || self.duration_s <= 0.0 || self.duration_s > 1e6 {
            return Err(ConfigError::new(
                "duration_s",
                format!("must be within (0, 1e6] s, got {}", self.duration_s),
            ));
        }
        self.initiator.validate().map_err(|e| e.within("initiator"))?;
        self.receiver.validate().map_err(|e| e.within("receiver"))?;
        if self.initiator.t_max_ticks != self.receiver.t_max_ticks {
            return Err(ConfigError::new(
                "receiver.t_max_ticks",
                "both nodes must use the same timer width",
            ));
        }
        if self.initiator.tick_hz != self.receiver.tick_hz {
            return Err(ConfigError::new(
                "receiver.tick_hz",
                "both nodes must use the same nominal timer frequency",
            ));
        }
        self.scheduler.validate().map_err(|e| e.within("scheduler"))?;
        self.sync.validate(&self.scheduler).map_err(|e| {
            if e.field.contains('.') {
                e
            } else {
                e.within("sync")
            }
        })?;
        self.channel.validate().map_err(|e| e.within("channel"))?;
        // Also checks the connection table and load feasibility.
        traffic::event_duration(&self.traffic, &self.connection)?;
        self.energy.validate().map_err(|e| e.within("energy"))?;
        self.metrics.validate().map_err(|e| e.within("metrics"))?;
        Ok(())
    }

    /// Total uncompensated arrival latency.
    pub fn effective_bias_ns(&self) -> u64 {
        self.sync.path_bias_ns + self.channel.propagation_delay_ns()
    }
}

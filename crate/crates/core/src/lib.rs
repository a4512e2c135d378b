//! Discrete-event simulator for one-way, timeslot-based timer synchronization
//! between two wireless nodes that share the radio with a BLE connection.

pub mod channel;
pub mod clock;
pub mod config;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod metrics;
pub mod scheduler;
pub mod sim;
pub mod sync;
pub mod traffic;

pub use config::RunConfig;
pub use error::{ConfigError, Error, SimError};
pub use kernel::SimTime;
pub use metrics::{RunMetrics, Summary};
pub use sim::simulate;

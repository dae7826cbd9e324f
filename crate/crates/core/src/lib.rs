//! Discrete-event simulation of 802.11ac BSSs with A-MPDU aggregation and a
//! per-AP controller that tunes the maximum aggregate size against a delay
//! budget for real-time flows.

pub mod batch;
pub mod config;
pub mod controller;
pub mod error;
pub mod mac;
pub mod metrics;
pub mod mobility;
pub mod phy;
pub mod sim;
pub mod traffic;
pub mod world;

pub use batch::{run_batch, BatchOutput, SweepAxis};
pub use config::ScenarioConfig;
pub use controller::{Decision, TuningPolicy};
pub use error::{BatchError, ConfigError};
pub use mac::AmpduLimit;
pub use metrics::{BatchSummary, Metric, RunReport};
pub use sim::SimTime;
pub use world::{run, RunOptions, RunOutput};

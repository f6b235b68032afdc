//! Discrete-event simulator for clock synchronization in mobile wireless
//! networks.
//!
//! The simulator runs nodes with drifting hardware clocks over a lossy
//! shared radio channel under random waypoint mobility, and compares four
//! synchronization protocols by their global synchronization error: the
//! largest logical-clock difference between any two nodes.

// `!(a < b)` is used on purpose to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod avt;
pub mod clocks;
pub mod config;
pub mod engine;
pub mod metrics;
pub mod protocols;
pub mod radio;
pub mod report;
pub mod repro;
pub mod scenario;
pub mod sim;
pub mod world;

pub use avt::{Avt, AvtParams, Feedback};
pub use clocks::{HardwareClock, LogicalClock, Micros, Ticks};
pub use config::{parse_config, render_config, ConfigError, ScenarioConfig};
pub use engine::{SimRng, SimTime};
pub use metrics::{average_global_error, sample_global_error, ErrorSample};
pub use protocols::{ProtocolKind, SyncParams};
pub use report::SummaryRow;
pub use scenario::{run_scenario, sweep, Job, SweepReport};
pub use sim::{simulate, RunOutput, SimError};

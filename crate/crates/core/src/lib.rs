//! Event-driven performance and power simulator for multi-tile neural
//! processing units.
//!
//! A run takes a platform [`config::Config`] and a compiled
//! [`workload::TaskGraph`]; [`simulate`] returns the execution trace, the
//! per-model activity and, when enabled, a power trace.

pub mod activity;
pub mod clock;
pub mod config;
pub mod engines;
mod error;
pub mod memory;
pub mod power;
pub mod report;
pub mod sched;
mod sim;
pub mod trace;
pub mod workload;

pub use error::Error;
pub use sim::{engine_paths, simulate, simulate_unvalidated, RunResult};

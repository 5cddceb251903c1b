//! Closed-loop simulation, controllers and performance metrics.

mod closed_loop;
mod compare;
mod config;
mod controller;
mod metrics;

pub use closed_loop::{run_closed_loop, LogRow, LoopSettings, TrajectoryLog};
pub use compare::{compare_controllers, write_comparison_csv, ComparisonRow};
pub use config::MpcConfig;
pub use controller::{ConstantInput, Controller, Decision, ExplicitMpc};
pub use metrics::{iae, iae_signal, scaled_error_norms, settling_time, settling_time_signal};

//! Round-trip-time model and mini-slot allocation for a single-radio station
//! that time-shares its card across several access points.
//!
//! The crate covers four layers:
//!
//! - [`schedule`]: duty cycles, the derived slot plan and the periodic slot
//!   schedule with its disconnection costs.
//! - [`rtt`]: RTT of a segment under a schedule, Monte-Carlo RTT sampling and
//!   the Mathis throughput mapping.
//! - [`allocation`]: the min-max disconnection heuristic, exhaustive blind
//!   optimisation and the sampled upper bound.
//! - [`experiment`]: scenario configs, delay sweeps and CSV output.
//!
//! With the default `parallel` feature, schedule scoring and sweep points run
//! on rayon; without it the same code runs sequentially and yields identical
//! results.

pub mod allocation;
pub mod error;
pub mod experiment;
mod par;
pub mod rtt;
pub mod schedule;

pub use allocation::{
    blind_allocate, enumerate_schedules, eq1_penalty, eq2_objective, minmax_allocate,
    upper_bound_allocate, AllocationResult, BlindObjective, EnumerationOptions, MinMaxOptions,
};
pub use error::{Error, Result};
pub use par::is_parallel;
pub use rtt::{
    aggregate_throughput, connected_intervals, mathis_throughput, rtt_for_send_time, sample_rtts,
    worst_case_rtt, PathParams, RttSamplerConfig, RttStats,
};
pub use schedule::{derive_slot_plan, DutyCycleSet, SlotPlan, SlotSchedule};

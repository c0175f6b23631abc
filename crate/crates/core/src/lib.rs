//! Time-parallel integration of ODEs with the parareal method.
//!
//! The crate provides the classical parareal iteration, in which every fine
//! propagation runs at the final target accuracy, and an adaptive variant in
//! which the fine accuracy is tightened from one iteration to the next
//! following an explicit tolerance schedule. Around the two engines sit
//! the pieces needed to run and judge them:
//!
//! - [`problems`]: benchmark systems (Brusselator, Van der Pol, Oregonator,
//!   SEIR) and user-defined systems;
//! - [`integrators`]: Dormand–Prince 5(4) and Radau IIA 5 propagators with
//!   cost counters and Newton warm starts;
//! - [`calibration`]: charts relating a solver's tolerance parameter to its
//!   achieved global accuracy;
//! - [`parareal`]: partitions, tolerance schedules, the engines and
//!   empirical estimation of the convergence constants;
//! - [`analysis`]: cost aggregation, speedup and efficiency, and the
//!   theoretical convergence and efficiency bounds.

pub mod analysis;
pub mod calibration;
pub mod error;
pub mod integrators;
pub mod parareal;
pub mod partition;
pub mod problems;

pub use analysis::{CostModel, SpeedupReport};
pub use calibration::AccuracyChart;
pub use error::{Error, Result};
pub use integrators::{
    propagate, reference_solve, CostCounters, Method, PropagationResult, SolverConfig, Status,
    WarmStartHistory, WarmStartStrategy,
};
pub use parareal::{HypothesisConstants, PararealRun, ToleranceSchedule};
pub use partition::TimePartition;
pub use problems::{OdeSystem, State, StateNorm};

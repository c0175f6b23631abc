//! Parareal engines.
//!
//! Every engine alternates a sequential coarse sweep with a parallel fine
//! stage. The classical engine runs every fine stage at the final accuracy
//! `eta/2`; the adaptive engine asks for a looser accuracy early on and
//! tightens it along a [`ToleranceSchedule`]; the exact-fine engine pins the
//! fine solver to the reference tolerance.

mod balance;
mod constants;
mod engine;
pub mod schedule;

pub use balance::{balance_partition, FLAT_IMBALANCE};
pub use constants::{estimate_constants, HypothesisConstants};
pub use engine::{
    coarse_sweep, fine_stage, pilot_iterations, run_adaptive, run_classical, run_exact, run_parareal,
    CoarseSweep, FineStage,
};
pub use schedule::{schedule_zeta, ScheduleMode, ToleranceSchedule};

use crate::calibration::AccuracyChart;
use crate::error::{invalid, Error, Result};
use crate::integrators::{propagate, CostCounters, SolverConfig};
use crate::partition::TimePartition;
use crate::problems::{OdeSystem, State};

/// A propagator `G(t0, dt, y0)` used where the solver is not necessarily
/// one of the built-in integrators.
pub trait Propagator: Sync {
    fn propagate(&self, t0: f64, dt: f64, y0: &[f64]) -> Result<State>;
}

impl<F> Propagator for F
where
    F: Fn(f64, f64, &[f64]) -> Result<State> + Sync,
{
    fn propagate(&self, t0: f64, dt: f64, y0: &[f64]) -> Result<State> {
        self(t0, dt, y0)
    }
}

pub struct SolverPropagator<'a> {
    pub system: &'a OdeSystem,
    pub config: SolverConfig,
}

impl Propagator for SolverPropagator<'_> {
    fn propagate(&self, t0: f64, dt: f64, y0: &[f64]) -> Result<State> {
        Ok(propagate(self.system, t0, dt, y0, &self.config, None)?.into_result()?.y_end)
    }
}

/// Translation of a required accuracy into a solver tolerance.
#[derive(Debug, Clone, PartialEq)]
pub enum AccuracyMap {
    Chart(AccuracyChart),
    /// Use the accuracy itself as `atol = rtol`.
    Direct,
}

impl AccuracyMap {
    pub fn tol_for(&self, zeta: f64) -> f64 {
        match self {
            AccuracyMap::Chart(c) => c.tol_for_accuracy(zeta),
            AccuracyMap::Direct => zeta,
        }
    }
}

/// A solver together with the map that picks its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSetup {
    pub config: SolverConfig,
    pub accuracy: AccuracyMap,
}

impl SolverSetup {
    pub fn new(config: SolverConfig, accuracy: AccuracyMap) -> Self {
        Self { config, accuracy }
    }

    pub fn charted(config: SolverConfig, chart: AccuracyChart) -> Self {
        Self::new(config, AccuracyMap::Chart(chart))
    }

    pub fn config_for(&self, zeta: f64) -> SolverConfig {
        self.config.with_tol(self.accuracy.tol_for(zeta))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PararealConfig {
    pub coarse: SolverSetup,
    pub fine: SolverSetup,
    /// Final target accuracy.
    pub eta: f64,
    /// Accuracy the coarse solver is calibrated to.
    pub eps_g: f64,
    /// Iteration cap; defaults to twice the interval count.
    pub k_max: Option<usize>,
    /// Anticipated iteration count for the practical schedule; estimated by
    /// [`pilot_iterations`] when absent.
    pub k_anticipated: Option<usize>,
    /// Run fine stages one interval at a time.
    pub serial: bool,
    /// Place boundaries by coarse step density instead of uniformly.
    pub balance: bool,
    /// Update the theoretical schedule's normalisation from the reference.
    pub adapt_nu: bool,
    /// Record errors against the reference solution.
    pub track_errors: bool,
}

impl PararealConfig {
    pub fn new(coarse: SolverSetup, fine: SolverSetup, eta: f64, eps_g: f64) -> Self {
        Self {
            coarse,
            fine,
            eta,
            eps_g,
            k_max: None,
            k_anticipated: None,
            serial: false,
            balance: false,
            adapt_nu: false,
            track_errors: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(invalid("eta", "must be positive"));
        }
        if !(self.eps_g > 0.0 && self.eps_g.is_finite()) {
            return Err(invalid("eps_g", "must be positive"));
        }
        if self.k_anticipated == Some(0) {
            return Err(invalid("K", "must be at least 1"));
        }
        self.coarse.config.validate()?;
        self.fine.config.validate()
    }

    pub fn k_max(&self, intervals: usize) -> usize {
        self.k_max.unwrap_or(2 * intervals)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Adaptive,
    Classical,
    /// Fine solver pinned to the reference tolerance.
    ExactFine,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Adaptive => "adaptive",
            Algorithm::Classical => "classical",
            Algorithm::ExactFine => "exact",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    /// Stopping test passed after this many iterations.
    Converged(usize),
    /// Iteration cap reached.
    Diverged,
    /// A propagation failed; rows computed so far are kept.
    Failed(Error),
}

/// Record of one parareal run.
#[derive(Debug, Clone, PartialEq)]
pub struct PararealRun {
    pub algorithm: Algorithm,
    pub partition: TimePartition,
    pub schedule: ToleranceSchedule,
    pub coarse_tol: f64,
    /// `states[k][n]`: iterate `k` at boundary `n`.
    pub states: Vec<Vec<State>>,
    /// Max error against the reference per row, empty when not tracked.
    pub errors: Vec<f64>,
    /// `increments[k]`: max change from row `k` to row `k + 1`.
    pub increments: Vec<f64>,
    /// Coarse sweep costs per row and interval.
    pub coarse_costs: Vec<Vec<CostCounters>>,
    /// Fine stage costs per iteration and interval.
    pub fine_costs: Vec<Vec<CostCounters>>,
    /// Required accuracy of each fine stage.
    pub zetas: Vec<f64>,
    /// Tolerance used by each fine stage.
    pub fine_tols: Vec<f64>,
    pub reference: Option<Vec<State>>,
    /// Cost of the iteration-count pilot, not part of the run cost.
    pub pilot_cost: CostCounters,
    pub outcome: RunOutcome,
}

impl PararealRun {
    pub fn converged_at(&self) -> Option<usize> {
        match self.outcome {
            RunOutcome::Converged(k) => Some(k),
            _ => None,
        }
    }

    pub fn is_converged(&self) -> bool {
        self.converged_at().is_some()
    }

    pub fn eta(&self) -> f64 {
        self.schedule.eta
    }

    pub fn intervals(&self) -> usize {
        self.partition.intervals()
    }

    /// Number of completed iterations (rows beyond the first).
    pub fn iterations(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn final_row(&self) -> &[State] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn final_error(&self) -> Option<f64> {
        self.errors.last().copied()
    }

    pub fn fine_total(&self) -> CostCounters {
        self.fine_costs.iter().flatten().copied().sum()
    }

    pub fn coarse_total(&self) -> CostCounters {
        self.coarse_costs.iter().flatten().copied().sum()
    }
}

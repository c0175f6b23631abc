//! Adaptive-step propagators with exact cost instrumentation.
//!
//! Two schemes are provided: the explicit Dormand–Prince 5(4) pair, used as
//! the coarse solver, and the three-stage Radau IIA method of order 5 with
//! simplified Newton iterations, used as the fine solver on stiff problems.
//! Both advance a state over `[t0, t0 + dt]` under mixed absolute/relative
//! local error control and count every right-hand side evaluation, Jacobian
//! evaluation and LU factorization they perform.

mod controller;
mod dopri;
mod radau;
mod warm_start;

use std::ops::{Add, AddAssign};

pub use controller::{step_controller, step_factor, ControllerParams, StepDecision};
pub use warm_start::{newton_initial_guess, IntervalHistory, NodeIterate, WarmStartHistory};

use crate::error::{invalid, Error, Result};
use crate::partition::TimePartition;
use crate::problems::{OdeSystem, State};

/// Tolerance used for ground-truth solves.
pub const REFERENCE_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Dormand–Prince 5(4), seven stages with first-same-as-last reuse.
    ExplicitRk54,
    /// Radau IIA, three stages, order 5.
    RadauIia5,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::ExplicitRk54 => "explicit_rk54",
            Method::RadauIia5 => "radau_iia5",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "explicit_rk54" | "rk45" | "dopri5" => Some(Method::ExplicitRk54),
            "radau_iia5" | "radau" => Some(Method::RadauIia5),
            _ => None,
        }
    }

    /// Order of the embedded error estimate driving the controller.
    pub(crate) fn error_order(self) -> u32 {
        match self {
            Method::ExplicitRk54 => 4,
            Method::RadauIia5 => 3,
        }
    }
}

/// Initial guess rule for the Newton iterations of implicit steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WarmStartStrategy {
    /// Extrapolate from the previous time node of the current propagation.
    #[default]
    PreviousTime,
    /// Resume from the iterate stored at the same node in the previous
    /// parareal iteration.
    PreviousIteration,
    /// Previous-iteration iterate shifted by the change observed at the
    /// preceding node.
    DynamicsCorrected,
}

impl WarmStartStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            WarmStartStrategy::PreviousTime => "previous_time",
            WarmStartStrategy::PreviousIteration => "previous_iteration",
            WarmStartStrategy::DynamicsCorrected => "dynamics_corrected",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "previous_time" => Some(Self::PreviousTime),
            "previous_iteration" => Some(Self::PreviousIteration),
            "dynamics_corrected" => Some(Self::DynamicsCorrected),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    pub atol: f64,
    pub rtol: f64,
    pub h_init: Option<f64>,
    pub h_min: f64,
    pub h_max: f64,
    pub newton_max_iters: usize,
    /// Newton stopping tolerance relative to the error scale. `None` picks
    /// `max(10 eps / rtol, min(0.03, sqrt(rtol)))`.
    pub newton_tol: Option<f64>,
    /// Consecutive step halvings allowed after Newton failures.
    pub newton_retries: usize,
    pub warm_start: WarmStartStrategy,
    pub controller: ControllerParams,
}

impl SolverConfig {
    pub fn new(method: Method, tol: f64) -> Self {
        Self {
            method,
            atol: tol,
            rtol: tol,
            h_init: None,
            h_min: 1e-12,
            h_max: f64::INFINITY,
            newton_max_iters: 6,
            newton_tol: None,
            newton_retries: 8,
            warm_start: WarmStartStrategy::PreviousTime,
            controller: ControllerParams::default(),
        }
    }

    pub fn explicit(tol: f64) -> Self {
        Self::new(Method::ExplicitRk54, tol)
    }

    pub fn radau(tol: f64) -> Self {
        Self::new(Method::RadauIia5, tol)
    }

    /// Same solver with `atol = rtol = tol`.
    pub fn with_tol(&self, tol: f64) -> Self {
        Self {
            atol: tol,
            rtol: tol,
            ..self.clone()
        }
    }

    pub fn with_warm_start(mut self, strategy: WarmStartStrategy) -> Self {
        self.warm_start = strategy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.atol > 0.0 && self.rtol > 0.0) {
            return Err(invalid("tolerance", "atol and rtol must be positive"));
        }
        if !(self.h_min > 0.0 && self.h_max > 0.0 && self.h_min <= self.h_max) {
            return Err(invalid("h_min/h_max", "need 0 < h_min <= h_max"));
        }
        if let Some(h) = self.h_init {
            if !(h > 0.0) {
                return Err(invalid("h_init", "must be positive"));
            }
        }
        if self.newton_max_iters == 0 {
            return Err(invalid("newton_max_iters", "must be positive"));
        }
        if let Some(t) = self.newton_tol {
            if !(t > 0.0) {
                return Err(invalid("newton_tol", "must be positive"));
            }
        }
        Ok(())
    }

    pub(crate) fn effective_newton_tol(&self) -> f64 {
        self.newton_tol
            .unwrap_or_else(|| (10.0 * f64::EPSILON / self.rtol).max(0.03f64.min(self.rtol.sqrt())))
    }
}

/// Work performed by one or more propagations. All counters add under merge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CostCounters {
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    pub rhs_evals: u64,
    pub jac_evals: u64,
    /// LU factorizations; the complex factorization of Radau counts as one.
    pub lin_solves: u64,
}

impl CostCounters {
    pub fn merge(&mut self, other: &CostCounters) {
        *self += *other;
    }

    pub fn steps(&self) -> u64 {
        self.accepted_steps + self.rejected_steps
    }
}

impl Add for CostCounters {
    type Output = CostCounters;

    fn add(mut self, rhs: CostCounters) -> CostCounters {
        self += rhs;
        self
    }
}

impl AddAssign for CostCounters {
    fn add_assign(&mut self, o: CostCounters) {
        self.accepted_steps += o.accepted_steps;
        self.rejected_steps += o.rejected_steps;
        self.rhs_evals += o.rhs_evals;
        self.jac_evals += o.jac_evals;
        self.lin_solves += o.lin_solves;
    }
}

impl std::iter::Sum for CostCounters {
    fn sum<I: Iterator<Item = CostCounters>>(iter: I) -> Self {
        iter.fold(CostCounters::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    StepSizeUnderflow,
    NewtonFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationResult {
    pub y_end: State,
    pub cost: CostCounters,
    pub t0: f64,
    pub dt: f64,
    pub status: Status,
    /// Converged Newton iterates per accepted step, filled when the
    /// propagation ran with a warm-start context.
    pub history: Option<IntervalHistory>,
}

impl PropagationResult {
    pub fn is_converged(&self) -> bool {
        self.status == Status::Converged
    }

    pub fn into_result(self) -> Result<Self> {
        match self.status {
            Status::Converged => Ok(self),
            status => Err(Error::Propagation {
                t0: self.t0,
                t1: self.t0 + self.dt,
                status,
            }),
        }
    }
}

/// Warm-start inputs for one fine propagation: the previous parareal
/// iteration's iterates for this interval and the current iteration index.
#[derive(Debug, Clone, Copy)]
pub struct WarmStart<'a> {
    pub previous: Option<&'a IntervalHistory>,
    pub iteration: usize,
}

/// Per-step observer used for step-density measurements.
pub(crate) type StepObserver<'a> = &'a mut dyn FnMut(f64);

pub(crate) struct Outcome {
    pub status: Status,
    pub y: State,
    pub stops: Vec<State>,
    pub cost: CostCounters,
    pub history: Option<IntervalHistory>,
}

/// Advances `y0` from `t0` to `t0 + dt`.
pub fn propagate(
    system: &OdeSystem,
    t0: f64,
    dt: f64,
    y0: &[f64],
    cfg: &SolverConfig,
    warm: Option<WarmStart<'_>>,
) -> Result<PropagationResult> {
    check_inputs(system, dt, y0, cfg)?;
    let out = integrate(system, t0, &[t0 + dt], y0, cfg, warm, None);
    Ok(PropagationResult {
        y_end: out.y,
        cost: out.cost,
        t0,
        dt,
        status: out.status,
        history: out.history,
    })
}

/// Like [`propagate`], additionally reporting the end time of every accepted
/// step.
pub fn propagate_recording_steps(
    system: &OdeSystem,
    t0: f64,
    dt: f64,
    y0: &[f64],
    cfg: &SolverConfig,
) -> Result<(PropagationResult, Vec<f64>)> {
    check_inputs(system, dt, y0, cfg)?;
    let mut times = Vec::new();
    let mut obs = |t: f64| times.push(t);
    let out = integrate(system, t0, &[t0 + dt], y0, cfg, None, Some(&mut obs));
    Ok((
        PropagationResult {
            y_end: out.y,
            cost: out.cost,
            t0,
            dt,
            status: out.status,
            history: None,
        },
        times,
    ))
}

/// One continuous solve from `t0` through the increasing output times
/// `stops`, returning the state at each of them. The step controller is not
/// reset at output times.
pub fn propagate_through(
    system: &OdeSystem,
    t0: f64,
    stops: &[f64],
    y0: &[f64],
    cfg: &SolverConfig,
) -> Result<(Vec<State>, CostCounters, Status)> {
    let Some(&last) = stops.last() else {
        return Ok((Vec::new(), CostCounters::default(), Status::Converged));
    };
    check_inputs(system, last - t0, y0, cfg)?;
    if stops.windows(2).any(|w| w[1] <= w[0]) || stops[0] <= t0 {
        return Err(invalid("stops", "output times must increase strictly past t0"));
    }
    let out = integrate(system, t0, stops, y0, cfg, None, None);
    Ok((out.stops, out.cost, out.status))
}

fn check_inputs(system: &OdeSystem, dt: f64, y0: &[f64], cfg: &SolverConfig) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", format!("must be positive, got {dt}")));
    }
    if y0.len() != system.dim() {
        return Err(Error::DimensionMismatch {
            expected: system.dim(),
            got: y0.len(),
        });
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(invalid("y0", "state must be finite"));
    }
    cfg.validate()
}

fn integrate(
    system: &OdeSystem,
    t0: f64,
    stops: &[f64],
    y0: &[f64],
    cfg: &SolverConfig,
    warm: Option<WarmStart<'_>>,
    observer: Option<StepObserver<'_>>,
) -> Outcome {
    match cfg.method {
        Method::ExplicitRk54 => dopri::integrate(system, t0, stops, y0, cfg, observer),
        Method::RadauIia5 => radau::integrate(system, t0, stops, y0, cfg, warm, observer),
    }
}

/// Sequential Radau IIA solve at [`REFERENCE_TOL`], recorded at every
/// partition boundary. Used as ground truth in all error measurements.
pub fn reference_solve(system: &OdeSystem, grid: &TimePartition) -> Result<Vec<State>> {
    reference_solve_at(system, grid.boundaries())
}

/// [`reference_solve`] on an arbitrary increasing grid starting at 0.
pub fn reference_solve_at(system: &OdeSystem, grid: &[f64]) -> Result<Vec<State>> {
    let mut out = vec![system.u0().to_vec()];
    if grid.len() <= 1 {
        return Ok(out);
    }
    let cfg = SolverConfig::radau(REFERENCE_TOL);
    let (states, _, status) = propagate_through(system, grid[0], &grid[1..], system.u0(), &cfg)?;
    if status != Status::Converged {
        return Err(Error::Propagation {
            t0: grid[0],
            t1: *grid.last().unwrap(),
            status,
        });
    }
    out.extend(states);
    Ok(out)
}

/// Mixed error norm `max_i |e_i| / (atol + rtol * max(|y_i|, |y_new_i|))`.
pub(crate) fn error_norm(err: &[f64], y: &[f64], y_new: &[f64], atol: f64, rtol: f64) -> f64 {
    err.iter()
        .zip(y.iter().zip(y_new))
        .fold(0.0_f64, |m, (e, (a, b))| {
            m.max(e.abs() / (atol + rtol * a.abs().max(b.abs())))
        })
}

/// Starting step from the magnitude of the solution and its first two
/// derivatives. Costs one rhs evaluation.
pub(crate) fn initial_step(
    system: &OdeSystem,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    order: u32,
    cfg: &SolverConfig,
    cost: &mut CostCounters,
) -> f64 {
    let scaled = |v: &[f64]| {
        v.iter()
            .zip(y0)
            .fold(0.0_f64, |m, (x, y)| m.max(x.abs() / (cfg.atol + cfg.rtol * y.abs())))
    };
    let d0 = scaled(y0);
    let d1 = scaled(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let f1 = system.rhs(t0 + h0, &y1);
    cost.rhs_evals += 1;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = scaled(&diff) / h0;
    let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / (order as f64 + 1.0))
    };
    (100.0 * h0).min(h1)
}

/// Shared stepping bookkeeping: landing exactly on output times.
pub(crate) struct Clock<'s> {
    pub t: f64,
    stops: &'s [f64],
    next: usize,
}

impl<'s> Clock<'s> {
    pub fn new(t0: f64, stops: &'s [f64]) -> Self {
        Self { t: t0, stops, next: 0 }
    }

    pub fn done(&self) -> bool {
        self.next >= self.stops.len()
    }

    pub fn target(&self) -> f64 {
        self.stops[self.next]
    }

    /// Step actually attempted when `h` is proposed; snaps onto the next
    /// output time when it would be reached or nearly reached.
    pub fn clip(&self, h: f64) -> (f64, bool) {
        let target = self.target();
        let remaining = target - self.t;
        if h >= remaining || self.t + h >= target - 1e-14 * target.abs().max(1.0) {
            (remaining, true)
        } else {
            (h, false)
        }
    }

    /// Advances by an accepted step; returns true when an output time was hit.
    pub fn advance(&mut self, h: f64, hits: bool) -> bool {
        if hits {
            self.t = self.target();
            self.next += 1;
            true
        } else {
            self.t += h;
            false
        }
    }
}

#[cfg(test)]
mod tests;

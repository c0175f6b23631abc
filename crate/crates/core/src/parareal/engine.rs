use log::{debug, info, warn};
use rayon::prelude::*;

use super::balance::balance_partition;
use super::{
    AccuracyMap, Algorithm, PararealConfig, PararealRun, RunOutcome, ScheduleMode, SolverSetup,
    ToleranceSchedule,
};
use crate::error::{invalid, Error, Result};
use crate::integrators::{
    propagate, reference_solve, CostCounters, IntervalHistory, SolverConfig, WarmStart,
    WarmStartHistory, REFERENCE_TOL,
};
use crate::partition::TimePartition;
use crate::problems::{OdeSystem, State};

/// Result of one sequential coarse sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseSweep {
    /// New iterate at every boundary, starting with `u0`.
    pub row: Vec<State>,
    /// Plain coarse end state `G(y^n)` of every interval, reused by the next
    /// sweep.
    pub coarse_ends: Vec<State>,
    pub costs: Vec<CostCounters>,
}

/// Sequential coarse sweep from `u0`.
///
/// Without a correction this is the plain coarse solve. With `(fine_ends,
/// previous_coarse_ends)` each new boundary value is
/// `G(y_new) + F(y_old) - G(y_old)`.
pub fn coarse_sweep(
    system: &OdeSystem,
    partition: &TimePartition,
    cfg: &SolverConfig,
    u0: &[f64],
    correction: Option<(&[State], &[State])>,
) -> Result<CoarseSweep> {
    let n_int = partition.intervals();
    if let Some((f, g)) = correction {
        if f.len() != n_int || g.len() != n_int {
            return Err(Error::DimensionMismatch {
                expected: n_int,
                got: f.len().min(g.len()),
            });
        }
    }
    let mut row = Vec::with_capacity(n_int + 1);
    let mut coarse_ends = Vec::with_capacity(n_int);
    let mut costs = Vec::with_capacity(n_int);
    row.push(u0.to_vec());
    for n in 0..n_int {
        let r = propagate(system, partition.start(n), partition.width(n), &row[n], cfg, None)
            .and_then(|r| r.into_result())
            .map_err(|e| Error::CoarseFailure {
                interval: n,
                source: Box::new(e),
            })?;
        let next = match correction {
            Some((f, g)) => r
                .y_end
                .iter()
                .zip(f[n].iter().zip(&g[n]))
                .map(|(gn, (fo, go))| gn + (fo - go))
                .collect(),
            None => r.y_end.clone(),
        };
        costs.push(r.cost);
        coarse_ends.push(r.y_end);
        row.push(next);
    }
    Ok(CoarseSweep {
        row,
        coarse_ends,
        costs,
    })
}

/// Result of one parallel fine stage.
#[derive(Debug, Clone, PartialEq)]
pub struct FineStage {
    pub ends: Vec<State>,
    pub costs: Vec<CostCounters>,
    pub tols: Vec<f64>,
}

/// Propagates every boundary value of `row` across its interval with the
/// fine solver at the accuracies `zeta_row`, concurrently unless `serial`.
///
/// The Newton iterates of this stage replace the contents of `history`.
#[allow(clippy::too_many_arguments)]
pub fn fine_stage(
    system: &OdeSystem,
    partition: &TimePartition,
    row: &[State],
    zeta_row: &[f64],
    fine: &SolverSetup,
    history: &mut WarmStartHistory,
    iteration: usize,
    serial: bool,
) -> Result<FineStage> {
    let n_int = partition.intervals();
    if row.len() < n_int || zeta_row.len() != n_int {
        return Err(Error::DimensionMismatch {
            expected: n_int,
            got: zeta_row.len().min(row.len()),
        });
    }
    if let Some(z) = zeta_row.iter().find(|z| !(**z > 0.0)) {
        return Err(invalid("zeta", format!("fine accuracy must be positive, got {z}")));
    }
    let previous = &*history;
    let task = |n: usize| {
        let cfg = fine.config_for(zeta_row[n]);
        let warm = WarmStart {
            previous: previous.interval(n),
            iteration,
        };
        propagate(system, partition.start(n), partition.width(n), &row[n], &cfg, Some(warm))
            .and_then(|r| r.into_result())
            .map(|r| (r, cfg.atol))
            .map_err(|e| Error::FineFailure {
                interval: n,
                iteration,
                source: Box::new(e),
            })
    };
    let results: Vec<_> = if serial {
        (0..n_int).map(task).collect()
    } else {
        (0..n_int).into_par_iter().map(task).collect()
    };

    let mut ends = Vec::with_capacity(n_int);
    let mut costs = Vec::with_capacity(n_int);
    let mut tols = Vec::with_capacity(n_int);
    let mut fresh: Vec<(usize, IntervalHistory)> = Vec::new();
    for (n, r) in results.into_iter().enumerate() {
        let (r, tol) = r?;
        if let Some(h) = r.history {
            fresh.push((n, h));
        }
        ends.push(r.y_end);
        costs.push(r.cost);
        tols.push(tol);
    }
    history.replace(iteration, fresh);
    Ok(FineStage { ends, costs, tols })
}

fn max_distance(system: &OdeSystem, a: &[State], b: &[State]) -> f64 {
    let norm = system.norm();
    a.iter()
        .zip(b)
        .map(|(x, y)| norm.distance(x, y))
        .fold(0.0, f64::max)
}

/// Runs parareal on a fixed partition.
pub fn run_parareal(
    system: &OdeSystem,
    partition: &TimePartition,
    algorithm: Algorithm,
    schedule: ToleranceSchedule,
    cfg: &PararealConfig,
) -> Result<PararealRun> {
    cfg.validate()?;
    schedule.validate()?;
    if (schedule.eta - cfg.eta).abs() > 0.0 {
        return Err(invalid("schedule", "schedule and run disagree on eta"));
    }
    let n_int = partition.intervals();
    let eta = cfg.eta;
    let reference = if cfg.track_errors {
        Some(reference_solve(system, partition)?)
    } else {
        None
    };
    let ref_scale = reference.as_ref().map(|r| {
        r.iter()
            .map(|s| 1.0 + system.norm().norm(s))
            .fold(0.0, f64::max)
    });
    let coarse_cfg = cfg.coarse.config_for(cfg.eps_g);
    let k_max = cfg.k_max(n_int);
    let exact = Setup::new(cfg, algorithm);

    let mut run = PararealRun {
        algorithm,
        partition: partition.clone(),
        schedule,
        coarse_tol: coarse_cfg.atol,
        states: Vec::new(),
        errors: Vec::new(),
        increments: Vec::new(),
        coarse_costs: Vec::new(),
        fine_costs: Vec::new(),
        zetas: Vec::new(),
        fine_tols: Vec::new(),
        reference,
        pilot_cost: CostCounters::default(),
        outcome: RunOutcome::Diverged,
    };
    let record_error = |run: &mut PararealRun, row: &[State]| {
        if let Some(r) = &run.reference {
            let e = max_distance(system, row, r);
            run.errors.push(e);
        }
    };

    let sweep = match coarse_sweep(system, partition, &coarse_cfg, system.u0(), None) {
        Ok(s) => s,
        Err(e) => {
            run.outcome = RunOutcome::Failed(e);
            return Ok(run);
        }
    };
    record_error(&mut run, &sweep.row);
    run.states.push(sweep.row);
    run.coarse_costs.push(sweep.costs);
    let mut coarse_ends = sweep.coarse_ends;

    if cfg.eps_g <= 0.5 * eta {
        run.outcome = RunOutcome::Converged(0);
        return Ok(run);
    }

    let mut history = WarmStartHistory::new();
    for k in 0..k_max {
        if cfg.adapt_nu && run.schedule.mode == ScheduleMode::Theoretical {
            if let Some(scale) = ref_scale {
                let own = run.states[k]
                    .iter()
                    .map(|s| 1.0 + system.norm().norm(s))
                    .fold(0.0, f64::max);
                run.schedule.set_nu(k, own / scale);
            }
        }
        let zeta = exact.zeta(&run.schedule, k);
        let zeta_row = vec![zeta; n_int];
        let stage = match fine_stage(
            system,
            partition,
            &run.states[k],
            &zeta_row,
            exact.fine(),
            &mut history,
            k,
            cfg.serial,
        ) {
            Ok(s) => s,
            Err(e) => {
                run.outcome = RunOutcome::Failed(e);
                return Ok(run);
            }
        };
        run.zetas.push(zeta);
        run.fine_tols.push(stage.tols[0]);
        run.fine_costs.push(stage.costs);

        let sweep = match coarse_sweep(
            system,
            partition,
            &coarse_cfg,
            system.u0(),
            Some((&stage.ends, &coarse_ends)),
        ) {
            Ok(s) => s,
            Err(e) => {
                run.outcome = RunOutcome::Failed(e);
                return Ok(run);
            }
        };
        let increment = max_distance(system, &sweep.row, &run.states[k]);
        record_error(&mut run, &sweep.row);
        run.increments.push(increment);
        run.states.push(sweep.row);
        run.coarse_costs.push(sweep.costs);
        coarse_ends = sweep.coarse_ends;
        debug!(
            "{} k={} zeta={zeta:e} increment={increment:e} error={:?}",
            algorithm.as_str(),
            k + 1,
            run.errors.last()
        );

        if increment <= 0.25 * eta && zeta <= 0.5 * eta {
            run.outcome = RunOutcome::Converged(k + 1);
            return Ok(run);
        }
    }
    warn!("{}: no convergence within {k_max} iterations", algorithm.as_str());
    Ok(run)
}

/// Fine solver and accuracy rule for one algorithm.
struct Setup {
    fine: SolverSetup,
    exact: bool,
}

impl Setup {
    fn new(cfg: &PararealConfig, algorithm: Algorithm) -> Self {
        match algorithm {
            Algorithm::ExactFine => Self {
                fine: SolverSetup::new(cfg.fine.config.clone(), AccuracyMap::Direct),
                exact: true,
            },
            _ => Self {
                fine: cfg.fine.clone(),
                exact: false,
            },
        }
    }

    fn fine(&self) -> &SolverSetup {
        &self.fine
    }

    fn zeta(&self, schedule: &ToleranceSchedule, k: usize) -> f64 {
        if self.exact {
            REFERENCE_TOL
        } else {
            schedule.zeta(k)
        }
    }
}

/// Anticipated iteration count `K` for the practical schedule.
///
/// A classical rehearsal, in which the coarse method calibrated to `eps_g^2`
/// stands in for the fine solver, runs until the stopping test passes at
/// some iteration `k_stop`; the result is `k_stop - 2`, capped to
/// `[1, intervals]`, so that the adaptive run stops together with the
/// classical one.
pub fn pilot_iterations(
    system: &OdeSystem,
    partition: &TimePartition,
    cfg: &PararealConfig,
) -> Result<(usize, CostCounters)> {
    cfg.validate()?;
    let n_int = partition.intervals();
    let coarse_cfg = cfg.coarse.config_for(cfg.eps_g);
    let surrogate = SolverSetup::new(cfg.coarse.config_for(cfg.eps_g * cfg.eps_g), AccuracyMap::Direct);
    let tol = surrogate.config.atol;
    let mut cost = CostCounters::default();

    let sweep = coarse_sweep(system, partition, &coarse_cfg, system.u0(), None)?;
    cost += sweep.costs.iter().copied().sum();
    let mut row = sweep.row;
    let mut coarse_ends = sweep.coarse_ends;
    let mut history = WarmStartHistory::new();
    for k in 0..n_int {
        let stage = fine_stage(
            system,
            partition,
            &row,
            &vec![tol; n_int],
            &surrogate,
            &mut history,
            k,
            cfg.serial,
        )?;
        cost += stage.costs.iter().copied().sum();
        let sweep = coarse_sweep(
            system,
            partition,
            &coarse_cfg,
            system.u0(),
            Some((&stage.ends, &coarse_ends)),
        )?;
        cost += sweep.costs.iter().copied().sum();
        let increment = max_distance(system, &sweep.row, &row);
        row = sweep.row;
        coarse_ends = sweep.coarse_ends;
        // The rehearsal stopped at k + 1. An adaptive run stops one
        // iteration after its first full-accuracy stage has settled, so the
        // schedule must reach eta/2 two stages before the classical stop.
        if increment <= 0.25 * cfg.eta {
            return Ok((k.saturating_sub(1).clamp(1, n_int), cost));
        }
    }
    Ok((n_int, cost))
}

fn partition_for(
    system: &OdeSystem,
    t_end: f64,
    intervals: usize,
    cfg: &PararealConfig,
) -> Result<TimePartition> {
    if cfg.balance {
        balance_partition(system, t_end, intervals, &cfg.coarse.config_for(cfg.eps_g))
    } else {
        TimePartition::uniform(t_end, intervals)
    }
}

/// Adaptive parareal over `[0, t_end]` with `intervals` subintervals.
pub fn run_adaptive(
    system: &OdeSystem,
    t_end: f64,
    intervals: usize,
    mode: ScheduleMode,
    cfg: &PararealConfig,
) -> Result<PararealRun> {
    cfg.validate()?;
    let partition = partition_for(system, t_end, intervals, cfg)?;
    let mut pilot_cost = CostCounters::default();
    let schedule = match mode {
        ScheduleMode::Theoretical => ToleranceSchedule::theoretical(cfg.eps_g, cfg.eta),
        ScheduleMode::Fixed => ToleranceSchedule::fixed(cfg.eps_g, cfg.eta),
        ScheduleMode::Practical => {
            let k = match cfg.k_anticipated {
                Some(k) => k,
                None => {
                    let (k, c) = pilot_iterations(system, &partition, cfg)?;
                    info!("pilot predicts {k} iterations");
                    pilot_cost = c;
                    k
                }
            };
            ToleranceSchedule::practical(cfg.eps_g, cfg.eta, k)
        }
    };
    let mut run = run_parareal(system, &partition, Algorithm::Adaptive, schedule, cfg)?;
    run.pilot_cost = pilot_cost;
    Ok(run)
}

/// Classical parareal: every fine stage at accuracy `eta/2`.
pub fn run_classical(
    system: &OdeSystem,
    t_end: f64,
    intervals: usize,
    cfg: &PararealConfig,
) -> Result<PararealRun> {
    cfg.validate()?;
    let partition = partition_for(system, t_end, intervals, cfg)?;
    let schedule = ToleranceSchedule::fixed(cfg.eps_g, cfg.eta);
    run_parareal(system, &partition, Algorithm::Classical, schedule, cfg)
}

/// Parareal with the fine solver at the reference tolerance.
pub fn run_exact(
    system: &OdeSystem,
    t_end: f64,
    intervals: usize,
    cfg: &PararealConfig,
) -> Result<PararealRun> {
    cfg.validate()?;
    let partition = partition_for(system, t_end, intervals, cfg)?;
    let schedule = ToleranceSchedule::fixed(cfg.eps_g, cfg.eta);
    run_parareal(system, &partition, Algorithm::ExactFine, schedule, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_brusselator, make_linear_scalar};

    fn direct(cfg: SolverConfig) -> SolverSetup {
        SolverSetup::new(cfg, AccuracyMap::Direct)
    }

    fn explicit_config(eta: f64, eps_g: f64) -> PararealConfig {
        PararealConfig::new(
            direct(SolverConfig::explicit(1.0)),
            direct(SolverConfig::explicit(1.0)),
            eta,
            eps_g,
        )
    }

    #[test]
    fn constant_solution_is_a_fixed_point() {
        let sys = make_linear_scalar(0.0, 2.5).unwrap();
        let cfg = explicit_config(1e-8, 1e-2);
        let run = run_classical(&sys, 1.0, 4, &cfg).unwrap();
        assert!(run.states[0].iter().all(|s| s[0] == 2.5));
        assert_eq!(run.converged_at(), Some(1));
    }

    #[test]
    fn equal_fine_and_coarse_ends_leave_row_unchanged() {
        let sys = make_brusselator(1.0, 3.0).unwrap();
        let p = TimePartition::uniform(4.0, 4).unwrap();
        let cfg = SolverConfig::explicit(1e-4);
        let plain = coarse_sweep(&sys, &p, &cfg, sys.u0(), None).unwrap();
        let ends = plain.coarse_ends.clone();
        let corrected = coarse_sweep(&sys, &p, &cfg, sys.u0(), Some((&ends, &ends))).unwrap();
        assert_eq!(plain.row, corrected.row);
    }

    #[test]
    fn exact_fine_terminates_after_k_iterations() {
        let sys = make_brusselator(1.0, 3.0).unwrap();
        let mut cfg = explicit_config(1e-12, 1e-2);
        cfg.k_max = Some(6);
        let run = run_exact(&sys, 6.0, 6, &cfg).unwrap();
        let reference = run.reference.as_ref().unwrap();
        for (k, row) in run.states.iter().enumerate() {
            for n in 0..=k.min(6) {
                let d = sys.norm().distance(&row[n], &reference[n]);
                assert!(d <= 1e-9, "k={k} n={n} d={d:e}");
            }
        }
    }

    #[test]
    fn loose_target_converges_immediately() {
        let sys = make_brusselator(1.0, 3.0).unwrap();
        let cfg = explicit_config(1.0, 0.1);
        let run = run_adaptive(&sys, 5.0, 5, ScheduleMode::Theoretical, &cfg).unwrap();
        assert_eq!(run.converged_at(), Some(0));
        assert!(run.fine_costs.is_empty());
    }

    #[test]
    fn fixed_adaptive_matches_classical() {
        let sys = make_brusselator(1.0, 3.0).unwrap();
        let cfg = explicit_config(1e-6, 1e-2);
        let a = run_adaptive(&sys, 5.0, 5, ScheduleMode::Fixed, &cfg).unwrap();
        let c = run_classical(&sys, 5.0, 5, &cfg).unwrap();
        assert_eq!(a.states, c.states);
        assert_eq!(a.fine_costs, c.fine_costs);
    }

    #[test]
    fn adaptive_converges_with_cheaper_fine_stages() {
        let sys = make_brusselator(1.0, 3.0).unwrap();
        let mut cfg = explicit_config(1e-7, 1e-2);
        let c = run_classical(&sys, 10.0, 10, &cfg).unwrap();
        cfg.k_anticipated = c.converged_at();
        let a = run_adaptive(&sys, 10.0, 10, ScheduleMode::Practical, &cfg).unwrap();
        assert!(a.is_converged() && c.is_converged());
        // tolerances are used uncalibrated, so only the gap between the two
        // runs is bounded
        let (ea, ec) = (a.final_error().unwrap(), c.final_error().unwrap());
        assert!((ea - ec).abs() <= 1e-7, "{:?} {:?}", a.errors, c.errors);
        if a.converged_at() == c.converged_at() {
            assert!(a.fine_total().rhs_evals <= c.fine_total().rhs_evals);
        }
        assert!(a.zetas.windows(2).all(|w| w[1] <= w[0]));
        assert!(a.states.iter().all(|row| row[0] == sys.u0()));
    }

    #[test]
    fn theoretical_schedule_keeps_tightening() {
        let sys = make_brusselator(1.0, 3.0).unwrap();
        let cfg = explicit_config(1e-7, 1e-2);
        let a = run_adaptive(&sys, 10.0, 10, ScheduleMode::Theoretical, &cfg).unwrap();
        assert!(a.is_converged());
        assert!(a.final_error().unwrap() <= 1e-7, "{:?}", a.errors);
        assert!(*a.zetas.last().unwrap() <= 0.5e-7);
    }

    #[test]
    fn serial_and_parallel_agree() {
        let sys = make_brusselator(1.0, 3.0).unwrap();
        let mut cfg = explicit_config(1e-6, 1e-2);
        let par = run_classical(&sys, 5.0, 5, &cfg).unwrap();
        cfg.serial = true;
        let ser = run_classical(&sys, 5.0, 5, &cfg).unwrap();
        assert_eq!(par, ser);
    }

    #[test]
    fn coarse_failure_is_recorded() {
        let sys = make_linear_scalar(-1e4, 1.0).unwrap();
        let mut cfg = explicit_config(1e-6, 1e-3);
        cfg.coarse.config.h_min = 0.05;
        cfg.coarse.config.h_init = Some(0.1);
        let run = run_classical(&sys, 1.0, 4, &cfg).unwrap();
        match &run.outcome {
            RunOutcome::Failed(Error::CoarseFailure { interval, .. }) => assert_eq!(*interval, 0),
            other => panic!("unexpected outcome {other:?}"),
        }
        assert!(run.states.is_empty());
    }

    #[test]
    fn iteration_cap_flags_divergence() {
        let sys = make_brusselator(1.0, 3.0).unwrap();
        let mut cfg = explicit_config(1e-10, 0.3);
        cfg.k_max = Some(1);
        let run = run_classical(&sys, 10.0, 10, &cfg).unwrap();
        assert_eq!(run.outcome, RunOutcome::Diverged);
        assert_eq!(run.states.len(), 2);
    }

    #[test]
    fn pilot_stays_within_interval_count() {
        let sys = make_brusselator(1.0, 3.0).unwrap();
        let cfg = explicit_config(1e-8, 1e-2);
        let p = TimePartition::uniform(10.0, 10).unwrap();
        let (k, cost) = pilot_iterations(&sys, &p, &cfg).unwrap();
        assert!((1..=10).contains(&k));
        assert!(cost.rhs_evals > 0);
    }

    #[test]
    fn mismatched_eta_is_rejected() {
        let sys = make_brusselator(1.0, 3.0).unwrap();
        let cfg = explicit_config(1e-6, 1e-2);
        let p = TimePartition::uniform(1.0, 2).unwrap();
        let s = ToleranceSchedule::fixed(1e-2, 1e-5);
        assert!(run_parareal(&sys, &p, Algorithm::Classical, s, &cfg).is_err());
    }
}

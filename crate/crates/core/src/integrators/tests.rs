use super::*;
use crate::partition::TimePartition;
use crate::problems::{make_brusselator, make_linear_scalar, make_van_der_pol, OdeSystem};

fn methods() -> [Method; 2] {
    [Method::ExplicitRk54, Method::RadauIia5]
}

/// Fixed step `h`: the controller may neither grow nor shrink it.
fn fixed_step(method: Method, h: f64) -> SolverConfig {
    SolverConfig {
        h_init: Some(h),
        h_max: h,
        h_min: h * 1e-3,
        ..SolverConfig::new(method, 1e10)
    }
}

#[test]
fn constant_solution_is_exact() {
    let sys = OdeSystem::new("zero", vec![1.5, -2.0], |_t, _u, du| du.fill(0.0)).unwrap();
    for m in methods() {
        let r = propagate(&sys, 0.0, 3.0, &[1.5, -2.0], &SolverConfig::new(m, 1e-8), None).unwrap();
        assert_eq!(r.status, Status::Converged);
        assert_eq!(r.y_end, vec![1.5, -2.0]);
        assert!(r.cost.accepted_steps >= 1);
    }
}

#[test]
fn exponential_decay_matches_closed_form() {
    let sys = make_linear_scalar(-1.0, 1.0).unwrap();
    for m in methods() {
        let r = propagate(&sys, 0.0, 1.0, &[1.0], &SolverConfig::new(m, 1e-10), None).unwrap();
        let err = (r.y_end[0] - (-1.0f64).exp()).abs();
        assert!(err <= 1e-8, "{m:?}: {err:e}");
    }
}

#[test]
fn radau_matches_reference_on_brusselator() {
    let sys = make_brusselator(1.0, 3.0).unwrap();
    let grid = TimePartition::uniform(20.0, 1).unwrap();
    let reference = reference_solve(&sys, &grid).unwrap();
    let r = propagate(&sys, 0.0, 20.0, sys.u0(), &SolverConfig::radau(1e-12), None).unwrap();
    assert!(r.is_converged());
    let d = sys.norm().distance(&r.y_end, &reference[1]);
    assert!(d <= 1e-9, "{d:e}");
}

#[test]
fn explicit_pair_is_fifth_order() {
    let sys = make_linear_scalar(-1.0, 1.0).unwrap();
    let exact = (-1.0f64).exp();
    let err = |h: f64| {
        let r = propagate(&sys, 0.0, 1.0, &[1.0], &fixed_step(Method::ExplicitRk54, h), None).unwrap();
        assert_eq!(r.cost.rejected_steps, 0);
        (r.y_end[0] - exact).abs()
    };
    let rate = (err(0.1) / err(0.05)).log2();
    assert!((4.5..=5.5).contains(&rate), "observed order {rate}");
}

#[test]
fn radau_is_a_stable_with_large_steps() {
    let sys = make_linear_scalar(-1e6, 1.0).unwrap();
    let r = propagate(&sys, 0.0, 1.0, &[1.0], &fixed_step(Method::RadauIia5, 0.1), None).unwrap();
    assert!(r.is_converged());
    assert!(r.y_end[0].abs() <= 1.0);
}

#[test]
fn explicit_rhs_count_accounts_for_fsal() {
    let sys = make_brusselator(1.0, 3.0).unwrap();
    let r = propagate(&sys, 0.0, 20.0, sys.u0(), &SolverConfig::explicit(1e-6), None).unwrap();
    let c = r.cost;
    assert!(c.rhs_evals >= 6 * c.accepted_steps + 1, "{c:?}");
    // one initial evaluation, one for the starting step, six per attempt
    assert_eq!(c.rhs_evals, 2 + 6 * c.steps());
}

#[test]
fn tighter_tolerance_never_costs_less() {
    let sys = make_brusselator(1.0, 3.0).unwrap();
    for m in methods() {
        let mut last = 0;
        for tol in [1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10] {
            let r = propagate(&sys, 0.0, 20.0, sys.u0(), &SolverConfig::new(m, tol), None).unwrap();
            let steps = r.cost.steps();
            assert!(steps >= last, "{m:?} tol {tol:e}: {steps} < {last}");
            last = steps;
        }
    }
}

#[test]
fn underflow_is_reported() {
    let sys = make_linear_scalar(-1e4, 1.0).unwrap();
    let cfg = SolverConfig {
        h_min: 0.05,
        h_init: Some(0.1),
        ..SolverConfig::explicit(1e-8)
    };
    let r = propagate(&sys, 0.0, 1.0, &[1.0], &cfg, None).unwrap();
    assert_eq!(r.status, Status::StepSizeUnderflow);
    assert!(r.into_result().is_err());
}

#[test]
fn newton_failure_is_reported() {
    let sys = make_van_der_pol(4.0).unwrap();
    let cfg = SolverConfig {
        newton_max_iters: 1,
        newton_retries: 0,
        ..SolverConfig::radau(1e-6)
    };
    let r = propagate(&sys, 0.0, 1.0, sys.u0(), &cfg, None).unwrap();
    assert_eq!(r.status, Status::NewtonFailure);
}

#[test]
fn invalid_inputs_are_rejected() {
    let sys = make_linear_scalar(-1.0, 1.0).unwrap();
    let cfg = SolverConfig::explicit(1e-6);
    assert!(propagate(&sys, 0.0, 0.0, &[1.0], &cfg, None).is_err());
    assert!(propagate(&sys, 0.0, 1.0, &[f64::NAN], &cfg, None).is_err());
    assert!(propagate(&sys, 0.0, 1.0, &[1.0, 2.0], &cfg, None).is_err());
    let bad = SolverConfig {
        h_min: 2.0,
        h_max: 1.0,
        ..cfg.clone()
    };
    assert!(propagate(&sys, 0.0, 1.0, &[1.0], &bad, None).is_err());
    assert!(propagate(&sys, 0.0, 1.0, &[1.0], &cfg.with_tol(0.0), None).is_err());
}

#[test]
fn reference_solve_linear_and_trivial_grids() {
    let lambda = -0.7;
    let u0 = 2.0;
    let sys = make_linear_scalar(lambda, u0).unwrap();
    let grid = TimePartition::uniform(5.0, 10).unwrap();
    let r = reference_solve(&sys, &grid).unwrap();
    assert_eq!(r.len(), 11);
    let bound = 1e-10 * (1.0 + u0.abs() * (lambda.abs() * 5.0).exp());
    for (t, y) in grid.boundaries().iter().zip(&r) {
        assert!((y[0] - (lambda * t).exp() * u0).abs() <= bound, "t={t}");
    }
    assert_eq!(reference_solve_at(&sys, &[0.0]).unwrap(), vec![vec![u0]]);

    let b = make_brusselator(1.0, 3.0).unwrap();
    let g = TimePartition::uniform(10.0, 5).unwrap();
    assert_eq!(reference_solve(&b, &g).unwrap(), reference_solve(&b, &g).unwrap());
}

#[test]
fn propagate_through_hits_every_stop() {
    let sys = make_linear_scalar(-1.0, 1.0).unwrap();
    let stops = [0.25, 0.5, 1.0, 3.0];
    for m in methods() {
        let (states, _, status) =
            propagate_through(&sys, 0.0, &stops, &[1.0], &SolverConfig::new(m, 1e-10)).unwrap();
        assert_eq!(status, Status::Converged);
        for (t, y) in stops.iter().zip(&states) {
            assert!((y[0] - (-t).exp()).abs() < 1e-8);
        }
    }
    assert!(propagate_through(&sys, 0.0, &[1.0, 0.5], &[1.0], &SolverConfig::explicit(1e-6)).is_err());
}

#[test]
fn recorded_steps_end_at_final_time() {
    let sys = make_brusselator(1.0, 3.0).unwrap();
    let (r, times) =
        propagate_recording_steps(&sys, 0.0, 20.0, sys.u0(), &SolverConfig::explicit(1e-4)).unwrap();
    assert_eq!(times.len() as u64, r.cost.accepted_steps);
    assert!(times.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(*times.last().unwrap(), 20.0);
}

#[test]
fn warm_start_changes_cost_not_solution() {
    let sys = make_brusselator(1.0, 3.0).unwrap();
    let base = SolverConfig::radau(1e-8);
    let y_prev = [0.4, 4.0];
    let y_next = [0.4 + 1e-7, 4.0 - 1e-7];
    let first = propagate(
        &sys,
        5.0,
        2.0,
        &y_prev,
        &base,
        Some(WarmStart {
            previous: None,
            iteration: 0,
        }),
    )
    .unwrap();
    let stored = first.history.expect("history recorded");
    assert_eq!(stored.len() as u64, first.cost.accepted_steps);

    let mut ends = Vec::new();
    for s in [
        WarmStartStrategy::PreviousTime,
        WarmStartStrategy::PreviousIteration,
        WarmStartStrategy::DynamicsCorrected,
    ] {
        let cfg = base.clone().with_warm_start(s);
        let r = propagate(
            &sys,
            5.0,
            2.0,
            &y_next,
            &cfg,
            Some(WarmStart {
                previous: Some(&stored),
                iteration: 1,
            }),
        )
        .unwrap();
        assert!(r.is_converged());
        ends.push(r.y_end);
    }
    let tol = 10.0 * base.effective_newton_tol();
    for e in &ends[1..] {
        assert!(sys.norm().distance(e, &ends[0]) <= tol);
    }
}

#[test]
fn counters_add() {
    let a = CostCounters {
        accepted_steps: 1,
        rejected_steps: 2,
        rhs_evals: 3,
        jac_evals: 4,
        lin_solves: 5,
    };
    let mut b = a;
    b.merge(&a);
    assert_eq!(b, a + a);
    assert_eq!(b.lin_solves, 10);
    assert_eq!([a, a, a].into_iter().sum::<CostCounters>().rhs_evals, 9);
}

use super::{error_norm, initial_step, step_controller, Clock, CostCounters, Outcome, SolverConfig, Status, StepObserver};
use crate::problems::OdeSystem;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];

// difference between fifth- and fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

pub(super) fn integrate(
    system: &OdeSystem,
    t0: f64,
    stops: &[f64],
    y0: &[f64],
    cfg: &SolverConfig,
    mut observer: Option<StepObserver<'_>>,
) -> Outcome {
    let n = system.dim();
    let order = super::Method::ExplicitRk54.error_order();
    let mut cost = CostCounters::default();
    let mut clock = Clock::new(t0, stops);
    let mut y = y0.to_vec();
    let mut out = Vec::with_capacity(stops.len());

    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    system.eval_rhs(t0, &y, &mut k[0]);
    cost.rhs_evals += 1;

    let mut h = match cfg.h_init {
        Some(h) => h,
        None => initial_step(system, t0, &y, &k[0], order, cfg, &mut cost),
    }
    .clamp(cfg.h_min, cfg.h_max);

    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];

    while !clock.done() {
        let (step, hits) = clock.clip(h);
        let t = clock.t;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[i];
                }
                stage[i] = y[i] + step * acc;
            }
            system.eval_rhs(t + C[s] * step, &stage, &mut k[s]);
            // the last stage is evaluated at the fifth-order solution
            if s == 6 {
                y_new.copy_from_slice(&stage);
            }
        }
        cost.rhs_evals += 6;
        for i in 0..n {
            let mut acc = 0.0;
            for (s, ks) in k.iter().enumerate() {
                acc += E[s] * ks[i];
            }
            err[i] = step * acc;
        }
        let err_norm = if y_new.iter().all(|v| v.is_finite()) {
            error_norm(&err, &y, &y_new, cfg.atol, cfg.rtol)
        } else {
            f64::INFINITY
        };
        let decision = step_controller(&cfg.controller, err_norm, order, step, 0.0, cfg.h_max);

        if decision.accept {
            cost.accepted_steps += 1;
            y.copy_from_slice(&y_new);
            k.swap(0, 6);
            if clock.advance(step, hits) {
                out.push(y.clone());
            }
            if let Some(obs) = observer.as_deref_mut() {
                obs(clock.t);
            }
            // a clipped final step says nothing about the natural step size
            h = if hits && step < h {
                h.max(decision.h_next)
            } else {
                decision.h_next
            };
        } else {
            cost.rejected_steps += 1;
            h = decision.h_next;
            if h < cfg.h_min {
                return Outcome {
                    status: Status::StepSizeUnderflow,
                    y,
                    stops: out,
                    cost,
                    history: None,
                };
            }
        }
    }

    Outcome {
        status: Status::Converged,
        y,
        stops: out,
        cost,
        history: None,
    }
}

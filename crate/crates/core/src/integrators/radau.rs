//! Three-stage Radau IIA (order 5) with simplified Newton iterations.
//!
//! The collocation system is solved in the eigenbasis of the Runge–Kutta
//! matrix, which splits it into one real and one complex `dim x dim` system
//! sharing a single Jacobian per step.

use nalgebra::{Complex, DMatrix, DVector, LU};

use super::{
    error_norm, initial_step, newton_initial_guess, step_controller, Clock, CostCounters,
    IntervalHistory, NodeIterate, Outcome, SolverConfig, Status, StepObserver, WarmStart,
};
use crate::problems::OdeSystem;

const SQRT6: f64 = 2.449_489_742_783_178;

/// Collocation nodes.
const C: [f64; 3] = [(4.0 - SQRT6) / 10.0, (4.0 + SQRT6) / 10.0, 1.0];

/// Error estimate weights.
const E: [f64; 3] = [
    (-13.0 - 7.0 * SQRT6) / 3.0,
    (-13.0 + 7.0 * SQRT6) / 3.0,
    -1.0 / 3.0,
];

/// Real eigenvalue of the inverse Runge–Kutta matrix.
const MU_REAL: f64 = 3.637_834_252_744_496;
const MU_COMPLEX: (f64, f64) = (2.681_082_873_627_752_3, -3.050_430_199_247_411);

/// Eigenvector transform `T` and its inverse.
const T: [[f64; 3]; 3] = [
    [0.094_438_762_488_975_24, -0.141_255_295_020_954_2, 0.030_029_194_105_147_42],
    [0.250_213_122_965_333_3, 0.204_129_352_293_799_94, -0.382_942_112_757_261_9],
    [1.0, 1.0, 0.0],
];
const TI: [[f64; 3]; 3] = [
    [4.178_718_591_551_904, 0.327_682_820_761_062_37, 0.523_376_445_499_449_5],
    [-4.178_718_591_551_904, -0.327_682_820_761_062_37, 0.476_623_554_500_550_44],
    [0.502_872_634_945_786_8, -2.571_926_949_855_605, 0.596_039_204_828_224_9],
];

/// Collocation polynomial coefficients for extrapolating stage guesses.
const P: [[f64; 3]; 3] = [
    [13.0 / 3.0 + 7.0 * SQRT6 / 3.0, -23.0 / 3.0 - 22.0 * SQRT6 / 3.0, 10.0 / 3.0 + 5.0 * SQRT6],
    [13.0 / 3.0 - 7.0 * SQRT6 / 3.0, -23.0 / 3.0 + 22.0 * SQRT6 / 3.0, 10.0 / 3.0 - 5.0 * SQRT6],
    [1.0 / 3.0, -8.0 / 3.0, 10.0 / 3.0],
];

/// Newton iterations that need more than this many sweeps, at a slow rate,
/// trigger a Jacobian refresh after the step.
const SLOW_ITERS: usize = 2;
const SLOW_RATE: f64 = 1e-3;

/// Accepted steps whose proposed growth stays below this factor keep their
/// step size so the factorizations can be reused.
const HOLD_BELOW: f64 = 1.2;

struct Factorization {
    h: f64,
    real: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    complex: LU<Complex<f64>, nalgebra::Dyn, nalgebra::Dyn>,
}

struct Newton {
    converged: bool,
    iters: usize,
    rate: Option<f64>,
    /// Stage increments `Z_i = Y_i − y`, stage-major.
    z: [Vec<f64>; 3],
}

struct Stepper<'a> {
    system: &'a OdeSystem,
    cfg: &'a SolverConfig,
    n: usize,
    cost: CostCounters,
    jac: DMatrix<f64>,
    jac_current: bool,
    lu: Option<Factorization>,
    newton_tol: f64,
}

impl Stepper<'_> {
    fn refresh_jacobian(&mut self, t: f64, y: &[f64]) {
        self.jac = self.system.jacobian(t, y);
        self.cost.jac_evals += 1;
        self.cost.rhs_evals += self.system.jacobian_rhs_cost();
        self.jac_current = true;
        self.lu = None;
    }

    /// Factorizes `mu/h I − J` for both eigenvalues. Returns false if either
    /// matrix is singular.
    fn factorize(&mut self, h: f64) -> bool {
        if matches!(&self.lu, Some(f) if f.h == h) {
            return true;
        }
        let n = self.n;
        let mut real = -self.jac.clone();
        for i in 0..n {
            real[(i, i)] += MU_REAL / h;
        }
        let mu_c = Complex::new(MU_COMPLEX.0 / h, MU_COMPLEX.1 / h);
        let mut complex = self.jac.map(|v| Complex::new(-v, 0.0));
        for i in 0..n {
            complex[(i, i)] += mu_c;
        }
        self.cost.lin_solves += 2;
        let real = real.lu();
        let complex = complex.lu();
        if !real.is_invertible() || !complex.is_invertible() {
            self.lu = None;
            return false;
        }
        self.lu = Some(Factorization { h, real, complex });
        true
    }

    fn solve_collocation(&mut self, t: f64, y: &[f64], h: f64, z0: [Vec<f64>; 3], scale: &[f64]) -> Newton {
        let n = self.n;
        let lu = self.lu.as_ref().expect("factorization present");
        let m_real = MU_REAL / h;
        let m_complex = Complex::new(MU_COMPLEX.0 / h, MU_COMPLEX.1 / h);
        let max_iter = self.cfg.newton_max_iters;

        // W = TI Z
        let mut w: [Vec<f64>; 3] = std::array::from_fn(|r| {
            (0..n)
                .map(|i| TI[r][0] * z0[0][i] + TI[r][1] * z0[1][i] + TI[r][2] * z0[2][i])
                .collect()
        });
        let mut z = z0;
        let mut f: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; n]);
        let mut stage = vec![0.0; n];
        let mut dw_norm_old: Option<f64> = None;
        let mut rate: Option<f64> = None;
        let mut evals = 0u64;

        let mut result = Newton {
            converged: false,
            iters: 0,
            rate: None,
            z: [Vec::new(), Vec::new(), Vec::new()],
        };

        for k in 0..max_iter {
            result.iters = k + 1;
            for s in 0..3 {
                for i in 0..n {
                    stage[i] = y[i] + z[s][i];
                }
                self.system.eval_rhs(t + C[s] * h, &stage, &mut f[s]);
            }
            evals += 3;
            if f.iter().flatten().any(|v| !v.is_finite()) {
                break;
            }
            let rhs_real = DVector::from_fn(n, |i, _| {
                TI[0][0] * f[0][i] + TI[0][1] * f[1][i] + TI[0][2] * f[2][i] - m_real * w[0][i]
            });
            let rhs_complex = DVector::from_fn(n, |i, _| {
                let re = TI[1][0] * f[0][i] + TI[1][1] * f[1][i] + TI[1][2] * f[2][i];
                let im = TI[2][0] * f[0][i] + TI[2][1] * f[1][i] + TI[2][2] * f[2][i];
                Complex::new(re, im) - m_complex * Complex::new(w[1][i], w[2][i])
            });
            let (Some(dw_real), Some(dw_complex)) =
                (lu.real.solve(&rhs_real), lu.complex.solve(&rhs_complex))
            else {
                break;
            };
            let mut dw_norm = 0.0_f64;
            for i in 0..n {
                let d = [dw_real[i], dw_complex[i].re, dw_complex[i].im];
                for v in d {
                    dw_norm = dw_norm.max(v.abs() / scale[i]);
                }
            }
            if !dw_norm.is_finite() {
                break;
            }
            if let Some(old) = dw_norm_old {
                rate = Some(dw_norm / old);
            }
            if let Some(r) = rate {
                let remaining = (max_iter - k) as i32;
                if r >= 1.0 || r.powi(remaining) / (1.0 - r) * dw_norm > self.newton_tol {
                    break;
                }
            }
            for i in 0..n {
                w[0][i] += dw_real[i];
                w[1][i] += dw_complex[i].re;
                w[2][i] += dw_complex[i].im;
            }
            for (s, zs) in z.iter_mut().enumerate() {
                for i in 0..n {
                    zs[i] = T[s][0] * w[0][i] + T[s][1] * w[1][i] + T[s][2] * w[2][i];
                }
            }
            let done = dw_norm == 0.0 || rate.is_some_and(|r| r / (1.0 - r) * dw_norm < self.newton_tol);
            if done {
                result.converged = true;
                break;
            }
            dw_norm_old = Some(dw_norm);
        }
        self.cost.rhs_evals += evals;
        result.rate = rate;
        result.z = z;
        result
    }
}

/// Stage values extrapolated from the collocation polynomial of the last
/// accepted step, or the current state repeated when there is none.
fn extrapolated_stages(y: &[f64], last: Option<&LastStep>, t: f64, h: f64) -> Vec<f64> {
    let n = y.len();
    let mut out = Vec::with_capacity(3 * n);
    match last {
        None => {
            for _ in 0..3 {
                out.extend_from_slice(y);
            }
        }
        Some(prev) => {
            // Q = Z^T P, dense output y_old + Q [x, x^2, x^3]
            for &c in &C {
                let x = (t + c * h - prev.t) / prev.h;
                let powers = [x, x * x, x * x * x];
                for i in 0..n {
                    let mut v = prev.y[i];
                    for (j, p) in powers.iter().enumerate() {
                        let q = prev.z[0][i] * P[0][j] + prev.z[1][i] * P[1][j] + prev.z[2][i] * P[2][j];
                        v += q * p;
                    }
                    out.push(v);
                }
            }
        }
    }
    out
}

struct LastStep {
    t: f64,
    h: f64,
    y: Vec<f64>,
    z: [Vec<f64>; 3],
}

fn split_increments(stages: &[f64], y: &[f64]) -> [Vec<f64>; 3] {
    let n = y.len();
    std::array::from_fn(|s| (0..n).map(|i| stages[s * n + i] - y[i]).collect())
}

pub(super) fn integrate(
    system: &OdeSystem,
    t0: f64,
    stops: &[f64],
    y0: &[f64],
    cfg: &SolverConfig,
    warm: Option<WarmStart<'_>>,
    mut observer: Option<StepObserver<'_>>,
) -> Outcome {
    let n = system.dim();
    let order = super::Method::RadauIia5.error_order();
    let mut clock = Clock::new(t0, stops);
    let mut y = y0.to_vec();
    let mut out = Vec::with_capacity(stops.len());
    let mut recorded = warm.map(|_| IntervalHistory::default());

    let mut st = Stepper {
        system,
        cfg,
        n,
        cost: CostCounters::default(),
        jac: DMatrix::zeros(n, n),
        jac_current: false,
        lu: None,
        newton_tol: cfg.effective_newton_tol(),
    };

    let mut f = system.rhs(t0, &y);
    st.cost.rhs_evals += 1;
    let mut h = match cfg.h_init {
        Some(h) => h,
        None => initial_step(system, t0, &y, &f, order, cfg, &mut st.cost),
    }
    .clamp(cfg.h_min, cfg.h_max);
    st.refresh_jacobian(t0, &y);

    let mut last: Option<LastStep> = None;
    let mut node = 0usize;
    let mut newton_failures = 0usize;

    let finish = |status, y, out, cost, recorded| Outcome {
        status,
        y,
        stops: out,
        cost,
        history: recorded,
    };

    while !clock.done() {
        let mut rejected = false;
        let (step, hits, z, newton_iters, newton_rate, err_norm) = loop {
            let (step, hits) = clock.clip(h);
            let t = clock.t;
            let fallback = extrapolated_stages(&y, last.as_ref(), t, step);
            let guess = match (warm, &recorded) {
                (Some(w), Some(cur)) => newton_initial_guess(
                    cfg.warm_start,
                    w.previous,
                    cur,
                    node,
                    w.iteration,
                    t,
                    step,
                    &fallback,
                ),
                _ => fallback.clone(),
            };
            let warm_guess = guess != fallback;
            let scale: Vec<f64> = y.iter().map(|v| cfg.atol + cfg.rtol * v.abs()).collect();

            let mut z0 = split_increments(&guess, &y);
            let mut tried_fallback = !warm_guess;
            let newton = loop {
                if !st.factorize(step) {
                    if st.jac_current {
                        break None;
                    }
                    st.refresh_jacobian(t, &y);
                    continue;
                }
                let res = st.solve_collocation(t, &y, step, z0.clone(), &scale);
                if res.converged {
                    break Some(res);
                }
                if !tried_fallback {
                    tried_fallback = true;
                    z0 = split_increments(&fallback, &y);
                    continue;
                }
                if st.jac_current {
                    break None;
                }
                st.refresh_jacobian(t, &y);
            };

            let Some(newton) = newton else {
                newton_failures += 1;
                st.cost.rejected_steps += 1;
                if newton_failures > cfg.newton_retries {
                    return finish(Status::NewtonFailure, y, out, st.cost, recorded);
                }
                h = 0.5 * step;
                rejected = true;
                if h < cfg.h_min {
                    return finish(Status::StepSizeUnderflow, y, out, st.cost, recorded);
                }
                continue;
            };

            let z = newton.z;
            let y_new: Vec<f64> = (0..n).map(|i| y[i] + z[2][i]).collect();
            let ze: Vec<f64> = (0..n)
                .map(|i| (E[0] * z[0][i] + E[1] * z[1][i] + E[2] * z[2][i]) / step)
                .collect();
            let lu = st.lu.as_ref().expect("factorized");
            let mut err = lu
                .real
                .solve(&DVector::from_fn(n, |i, _| f[i] + ze[i]))
                .map(|v| v.as_slice().to_vec())
                .unwrap_or_else(|| vec![f64::INFINITY; n]);
            let mut err_norm = error_norm(&err, &y, &y_new, cfg.atol, cfg.rtol);
            if rejected && err_norm > 1.0 {
                // refine the estimate once when stiff components dominate
                let probe: Vec<f64> = (0..n).map(|i| y[i] + err[i]).collect();
                let fp = system.rhs(t, &probe);
                st.cost.rhs_evals += 1;
                err = lu
                    .real
                    .solve(&DVector::from_fn(n, |i, _| fp[i] + ze[i]))
                    .map(|v| v.as_slice().to_vec())
                    .unwrap_or_else(|| vec![f64::INFINITY; n]);
                err_norm = error_norm(&err, &y, &y_new, cfg.atol, cfg.rtol);
            }
            if !err_norm.is_finite()
                || err.iter().chain(&y_new).any(|v| !v.is_finite())
            {
                err_norm = f64::INFINITY;
            }

            let decision = step_controller(&cfg.controller, err_norm, order, step, 0.0, cfg.h_max);
            if decision.accept {
                break (step, hits, z, newton.iters, newton.rate, err_norm);
            }
            st.cost.rejected_steps += 1;
            rejected = true;
            h = decision.h_next;
            if h < cfg.h_min {
                return finish(Status::StepSizeUnderflow, y, out, st.cost, recorded);
            }
        };

        newton_failures = 0;
        st.cost.accepted_steps += 1;
        let t = clock.t;
        let y_new: Vec<f64> = (0..n).map(|i| y[i] + z[2][i]).collect();
        if let Some(rec) = recorded.as_mut() {
            let mut stages = Vec::with_capacity(3 * n);
            for zs in &z {
                stages.extend(zs.iter().zip(&y).map(|(a, b)| a + b));
            }
            rec.push(NodeIterate { t, h: step, stages });
        }

        let recompute_jac =
            newton_iters > SLOW_ITERS && newton_rate.is_some_and(|r| r > SLOW_RATE);
        let factor = super::step_factor(&cfg.controller, err_norm, order);
        let mut h_next = (step * factor).min(cfg.h_max);
        if !recompute_jac && factor < HOLD_BELOW {
            h_next = step;
        }
        if hits && step < h {
            // clipped onto an output time; keep the natural step size
            h_next = h_next.max(h);
        }

        last = Some(LastStep {
            t,
            h: step,
            y: y.clone(),
            z,
        });
        y = y_new;
        if clock.advance(step, hits) {
            out.push(y.clone());
        }
        let t_new = clock.t;
        if let Some(obs) = observer.as_deref_mut() {
            obs(t_new);
        }
        node += 1;
        if clock.done() {
            break;
        }
        f = system.rhs(t_new, &y);
        st.cost.rhs_evals += 1;
        if recompute_jac {
            st.refresh_jacobian(t_new, &y);
        } else {
            st.jac_current = false;
        }
        h = h_next;
    }

    finish(Status::Converged, y, out, st.cost, recorded)
}

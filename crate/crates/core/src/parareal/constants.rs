use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Propagator, SolverPropagator};
use crate::error::{invalid, Error, Result};
use crate::integrators::{reference_solve, SolverConfig, REFERENCE_TOL};
use crate::partition::TimePartition;
use crate::problems::OdeSystem;

/// Lower bound applied to estimated constants so derived quantities stay
/// finite.
const CONSTANT_FLOOR: f64 = 1e-12;

/// Relative size of the state perturbations used when sampling.
const PERTURBATION: f64 = 1e-3;

/// Stability and accuracy constants of a coarse propagator, and the
/// quantities that drive the convergence bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisConstants {
    /// Lipschitz growth rate of the coarse propagator.
    pub c_c: f64,
    /// Lipschitz constant of the coarse defect, relative to `eps_g`.
    pub c_d: f64,
    pub eps_g: f64,
    pub t_end: f64,
    /// Largest subinterval width.
    pub delta_t: f64,
    /// `max_n (1 + |u(T_n)|)`.
    pub state_scale: f64,
}

impl HypothesisConstants {
    pub fn new(c_c: f64, c_d: f64, eps_g: f64, t_end: f64, delta_t: f64, state_scale: f64) -> Result<Self> {
        for (name, v) in [
            ("C_c", c_c),
            ("C_d", c_d),
            ("eps_g", eps_g),
            ("t_end", t_end),
            ("delta_t", delta_t),
            ("state_scale", state_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(Self {
            c_c,
            c_d,
            eps_g,
            t_end,
            delta_t,
            state_scale,
        })
    }

    /// Coarse accuracy below which the ideal iteration contracts.
    pub fn eps_bar(&self) -> f64 {
        (self.c_c * self.delta_t).exp() / (self.c_d * self.t_end)
    }

    pub fn tau(&self) -> f64 {
        self.c_d * self.t_end * (-self.c_c * self.delta_t).exp() * self.eps_g
    }

    pub fn tau_tilde(&self) -> f64 {
        self.tau() + self.eps_g
    }

    pub fn mu(&self) -> f64 {
        (self.c_c * self.t_end).exp() / self.c_d * self.state_scale
    }

    /// Scales `C_c` and `eps_g` by `factor`. `C_d` is left alone: it enters
    /// `mu` inversely, and the defect already grows through `eps_g`.
    pub fn inflated(&self, factor: f64) -> Self {
        Self {
            c_c: self.c_c * factor,
            eps_g: self.eps_g * factor,
            ..*self
        }
    }
}

/// Samples the coarse propagator around the reference trajectory and
/// estimates its growth rate `C_c` and defect constant `C_d`.
///
/// For each sample an interval is drawn at random, two perturbed copies
/// `x, y` of the reference state at its start are propagated, and
///
/// - `C_c >= (|G(x) - G(y)| / |x - y| - 1) / s`,
/// - `C_d eps_g >= |dG(x) - dG(y)| / (s |x - y|)`, with `dG = E - G` and
///   `E` the reference-tolerance solver.
pub fn estimate_constants(
    system: &OdeSystem,
    partition: &TimePartition,
    coarse: &dyn Propagator,
    eps_g: f64,
    n_samples: usize,
    seed: u64,
) -> Result<HypothesisConstants> {
    if n_samples < 10 {
        return Err(invalid("n_samples", "need at least 10 samples"));
    }
    if !(eps_g > 0.0) {
        return Err(invalid("eps_g", "must be positive"));
    }
    let reference = reference_solve(system, partition)?;
    let exact = SolverPropagator {
        system,
        config: SolverConfig::radau(REFERENCE_TOL),
    };
    let norm = system.norm();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c_c = f64::NEG_INFINITY;
    let mut cd_eps = 0.0f64;
    let mut used = 0usize;
    for _ in 0..n_samples {
        let n = rng.gen_range(0..partition.intervals());
        let (t, s) = (partition.start(n), partition.width(n));
        let base = &reference[n];
        let scale = PERTURBATION * (1.0 + norm.norm(base));
        let x: Vec<f64> = base.iter().map(|v| v + scale * rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = base.iter().map(|v| v + scale * rng.gen_range(-1.0..1.0)).collect();
        let dxy = norm.distance(&x, &y);
        if dxy < 1e-12 {
            continue;
        }
        let gx = coarse.propagate(t, s, &x)?;
        let gy = coarse.propagate(t, s, &y)?;
        let ex = exact.propagate(t, s, &x)?;
        let ey = exact.propagate(t, s, &y)?;
        c_c = c_c.max((norm.distance(&gx, &gy) / dxy - 1.0) / s);
        let defect: Vec<f64> = (0..x.len())
            .map(|i| (ex[i] - gx[i]) - (ey[i] - gy[i]))
            .collect();
        cd_eps = cd_eps.max(norm.norm(&defect) / (s * dxy));
        used += 1;
    }
    if used == 0 {
        return Err(Error::Calibration("every constant sample was degenerate".into()));
    }
    let state_scale = reference
        .iter()
        .map(|u| 1.0 + norm.norm(u))
        .fold(0.0, f64::max);
    HypothesisConstants::new(
        c_c.max(CONSTANT_FLOOR),
        (cd_eps / eps_g).max(CONSTANT_FLOOR),
        eps_g,
        partition.t_end(),
        partition.max_width(),
        state_scale,
    )
}

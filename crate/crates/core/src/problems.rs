//! Benchmark ODE systems and generic user-supplied systems.
//!
//! Every system is written as `u' = rhs(t, u)`. Built-in systems ship an
//! analytic Jacobian where one is cheap to write down; otherwise the
//! integrators fall back on [`finite_difference_jacobian`].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{invalid, Result};

pub type State = Vec<f64>;
pub type RhsFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
pub type JacobianFn = dyn Fn(f64, &[f64], &mut DMatrix<f64>) + Send + Sync;

/// Norm used on the state space for every error measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StateNorm {
    #[default]
    Max,
    Euclidean,
}

impl StateNorm {
    pub fn norm(self, v: &[f64]) -> f64 {
        match self {
            StateNorm::Max => v.iter().fold(0.0_f64, |m, x| m.max(x.abs())),
            StateNorm::Euclidean => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            StateNorm::Max => a
                .iter()
                .zip(b)
                .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())),
            StateNorm::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        }
    }
}

/// An initial value problem `u' = rhs(t, u)`, `u(0) = u0`.
///
/// Cloning is cheap; the right-hand side and Jacobian are shared behind
/// `Arc` and must be callable from several threads at once.
#[derive(Clone)]
pub struct OdeSystem {
    name: String,
    dim: usize,
    rhs: Arc<RhsFn>,
    jacobian: Option<Arc<JacobianFn>>,
    u0: State,
    params: BTreeMap<String, f64>,
    norm: StateNorm,
}

impl fmt::Debug for OdeSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OdeSystem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("u0", &self.u0)
            .field("params", &self.params)
            .field("norm", &self.norm)
            .finish()
    }
}

impl OdeSystem {
    /// Generic system. `u0.len()` fixes the dimension.
    pub fn new<F>(name: impl Into<String>, u0: State, rhs: F) -> Result<Self>
    where
        F: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        if u0.is_empty() {
            return Err(invalid("u0", "state must have at least one component"));
        }
        if u0.iter().any(|x| !x.is_finite()) {
            return Err(invalid("u0", "initial state must be finite"));
        }
        Ok(Self {
            name: name.into(),
            dim: u0.len(),
            rhs: Arc::new(rhs),
            jacobian: None,
            u0,
            params: BTreeMap::new(),
            norm: StateNorm::Max,
        })
    }

    pub fn with_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(f64, &[f64], &mut DMatrix<f64>) + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    pub fn with_params<I, K>(mut self, params: I) -> Self
    where
        I: IntoIterator<Item = (K, f64)>,
        K: Into<String>,
    {
        self.params.extend(params.into_iter().map(|(k, v)| (k.into(), v)));
        self
    }

    pub fn with_norm(mut self, norm: StateNorm) -> Self {
        self.norm = norm;
        self
    }

    pub fn with_initial_state(mut self, u0: State) -> Result<Self> {
        if u0.len() != self.dim {
            return Err(crate::Error::DimensionMismatch {
                expected: self.dim,
                got: u0.len(),
            });
        }
        self.u0 = u0;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn u0(&self) -> &[f64] {
        &self.u0
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn norm(&self) -> StateNorm {
        self.norm
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn eval_rhs(&self, t: f64, u: &[f64], out: &mut [f64]) {
        (self.rhs)(t, u, out)
    }

    pub fn rhs(&self, t: f64, u: &[f64]) -> State {
        let mut out = vec![0.0; self.dim];
        (self.rhs)(t, u, &mut out);
        out
    }

    /// Analytic Jacobian when available, forward differences otherwise.
    pub fn jacobian(&self, t: f64, u: &[f64]) -> DMatrix<f64> {
        match &self.jacobian {
            Some(jac) => {
                let mut m = DMatrix::zeros(self.dim, self.dim);
                jac(t, u, &mut m);
                m
            }
            None => finite_difference_jacobian(self, t, u),
        }
    }

    /// Number of rhs evaluations a call to [`Self::jacobian`] costs.
    pub fn jacobian_rhs_cost(&self) -> u64 {
        if self.jacobian.is_some() {
            0
        } else {
            self.dim as u64 + 1
        }
    }
}

/// Forward-difference Jacobian with column step `sqrt(eps) * max(|u_j|, 1)`.
pub fn finite_difference_jacobian(system: &OdeSystem, t: f64, u: &[f64]) -> DMatrix<f64> {
    let n = system.dim();
    let f0 = system.rhs(t, u);
    let mut jac = DMatrix::zeros(n, n);
    let mut shifted = u.to_vec();
    let mut f1 = vec![0.0; n];
    let sqrt_eps = f64::EPSILON.sqrt();
    for j in 0..n {
        let h = sqrt_eps * u[j].abs().max(1.0);
        shifted[j] = u[j] + h;
        // use the representable step
        let h = shifted[j] - u[j];
        system.eval_rhs(t, &shifted, &mut f1);
        for i in 0..n {
            jac[(i, j)] = (f1[i] - f0[i]) / h;
        }
        shifted[j] = u[j];
    }
    jac
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive, got {v}")))
    }
}

/// Brusselator `x' = A + x²y − (B+1)x`, `y' = Bx − x²y` from `(0, 1)`.
pub fn make_brusselator(a: f64, b: f64) -> Result<OdeSystem> {
    require_positive("A", a)?;
    require_positive("B", b)?;
    let sys = OdeSystem::new("brusselator", vec![0.0, 1.0], move |_t, u, du| {
        let (x, y) = (u[0], u[1]);
        du[0] = a + x * x * y - (b + 1.0) * x;
        du[1] = b * x - x * x * y;
    })?
    .with_jacobian(move |_t, u, j| {
        let (x, y) = (u[0], u[1]);
        j[(0, 0)] = -(b + 1.0) + 2.0 * x * y;
        j[(0, 1)] = x * x;
        j[(1, 0)] = b - 2.0 * x * y;
        j[(1, 1)] = -x * x;
    })
    .with_params([("A", a), ("B", b)]);
    Ok(sys)
}

/// Van der Pol oscillator `x' = y`, `y' = μ(1−x²)y − x` from `(2, 0)`.
pub fn make_van_der_pol(mu: f64) -> Result<OdeSystem> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(invalid("mu", format!("must be nonnegative, got {mu}")));
    }
    let sys = OdeSystem::new("van_der_pol", vec![2.0, 0.0], move |_t, u, du| {
        let (x, y) = (u[0], u[1]);
        du[0] = y;
        du[1] = mu * (1.0 - x * x) * y - x;
    })?
    .with_jacobian(move |_t, u, j| {
        let (x, y) = (u[0], u[1]);
        j[(0, 0)] = 0.0;
        j[(0, 1)] = 1.0;
        j[(1, 0)] = -2.0 * mu * x * y - 1.0;
        j[(1, 1)] = mu * (1.0 - x * x);
    })
    .with_params([("mu", mu)]);
    Ok(sys)
}

/// Parameters of the scaled three-variable Field–Noyes Oregonator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OregonatorParams {
    pub s: f64,
    pub q: f64,
    pub w: f64,
    pub u0: [f64; 3],
}

impl Default for OregonatorParams {
    /// The classical stiff parameter set.
    fn default() -> Self {
        Self {
            s: 77.27,
            q: 8.375e-6,
            w: 0.161,
            u0: [1.0, 2.0, 3.0],
        }
    }
}

/// Oregonator
/// `y1' = s(y2 + y1(1 − q y1 − y2))`,
/// `y2' = (y3 − (1 + y1) y2)/s`,
/// `y3' = w(y1 − y3)`.
pub fn make_oregonator(p: OregonatorParams) -> Result<OdeSystem> {
    require_positive("s", p.s)?;
    require_positive("q", p.q)?;
    require_positive("w", p.w)?;
    let OregonatorParams { s, q, w, u0 } = p;
    let sys = OdeSystem::new("oregonator", u0.to_vec(), move |_t, u, du| {
        let (y1, y2, y3) = (u[0], u[1], u[2]);
        du[0] = s * (y2 + y1 * (1.0 - q * y1 - y2));
        du[1] = (y3 - (1.0 + y1) * y2) / s;
        du[2] = w * (y1 - y3);
    })?
    .with_jacobian(move |_t, u, j| {
        let (y1, y2) = (u[0], u[1]);
        j[(0, 0)] = s * (1.0 - 2.0 * q * y1 - y2);
        j[(0, 1)] = s * (1.0 - y1);
        j[(0, 2)] = 0.0;
        j[(1, 0)] = -y2 / s;
        j[(1, 1)] = -(1.0 + y1) / s;
        j[(1, 2)] = 1.0 / s;
        j[(2, 0)] = w;
        j[(2, 1)] = 0.0;
        j[(2, 2)] = -w;
    })
    .with_params([("s", s), ("q", q), ("w", w)]);
    Ok(sys)
}

/// SEIR model with zoonotic importation, individual reaction and
/// governmental action. Rates are per day; compartments are population
/// fractions of the initial population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeirParams {
    /// Baseline transmission rate β0.
    pub beta0: f64,
    /// Strength of governmental action, in [0, 1).
    pub alpha: f64,
    /// Intensity of individual reaction.
    pub kappa: f64,
    /// Proportion of severe cases feeding the public risk perception.
    pub severe_fraction: f64,
    /// Mean duration of public reaction is `1/lambda` days.
    pub lambda: f64,
    /// Mean latent period is `1/sigma` days.
    pub sigma: f64,
    /// Mean infectious period is `1/gamma` days.
    pub gamma: f64,
    /// Emigration rate.
    pub mu: f64,
    /// Zoonotic importation (infected-equivalent density).
    pub importation: f64,
    /// Initial (S, E, I, R, N, D, C).
    pub u0: [f64; 7],
}

impl Default for SeirParams {
    fn default() -> Self {
        Self {
            beta0: 0.5944,
            alpha: 0.4239,
            kappa: 1117.3,
            severe_fraction: 0.2,
            lambda: 1.0 / 11.2,
            sigma: 1.0 / 3.0,
            gamma: 1.0 / 5.0,
            mu: 0.0205,
            importation: 0.0,
            u0: [0.9, 0.0, 1.0e-6, 0.0, 1.0, 0.0, 0.0],
        }
    }
}

pub const SEIR_COMPARTMENTS: [&str; 7] = ["S", "E", "I", "R", "N", "D", "C"];

/// State `(S, E, I, R, N, D, C)`:
/// `S' = −β0 S F/N − β S I/N − μS`, `E' = β0 S F/N + β S I/N − (σ+μ)E`,
/// `I' = σE − (γ+μ)I`, `R' = γI − μR`, `N' = −μN`, `D' = dγI − λD`,
/// `C' = σE`, with `β = β0(1−α)(1−D/N)^κ`.
pub fn make_seir(p: SeirParams) -> Result<OdeSystem> {
    require_positive("beta0", p.beta0)?;
    require_positive("kappa", p.kappa)?;
    require_positive("severe_fraction", p.severe_fraction)?;
    require_positive("lambda", p.lambda)?;
    require_positive("sigma", p.sigma)?;
    require_positive("gamma", p.gamma)?;
    if !(0.0..1.0).contains(&p.alpha) {
        return Err(invalid("alpha", format!("must lie in [0, 1), got {}", p.alpha)));
    }
    if !(p.mu >= 0.0) {
        return Err(invalid("mu", format!("must be nonnegative, got {}", p.mu)));
    }
    if !(p.importation >= 0.0) {
        return Err(invalid(
            "importation",
            format!("must be nonnegative, got {}", p.importation),
        ));
    }
    let q = p;
    let sys = OdeSystem::new("seir", p.u0.to_vec(), move |_t, u, du| {
        let (s, e, i, r, n, d) = (u[0], u[1], u[2], u[3], u[4], u[5]);
        let risk = (1.0 - d / n).max(0.0);
        let beta = q.beta0 * (1.0 - q.alpha) * risk.powf(q.kappa);
        let zoonotic = q.beta0 * s * q.importation / n;
        let human = beta * s * i / n;
        du[0] = -zoonotic - human - q.mu * s;
        du[1] = zoonotic + human - (q.sigma + q.mu) * e;
        du[2] = q.sigma * e - (q.gamma + q.mu) * i;
        du[3] = q.gamma * i - q.mu * r;
        du[4] = -q.mu * n;
        du[5] = q.severe_fraction * q.gamma * i - q.lambda * d;
        du[6] = q.sigma * e;
    })?
    .with_params([
        ("beta0", p.beta0),
        ("alpha", p.alpha),
        ("kappa", p.kappa),
        ("severe_fraction", p.severe_fraction),
        ("lambda", p.lambda),
        ("sigma", p.sigma),
        ("gamma", p.gamma),
        ("mu", p.mu),
        ("importation", p.importation),
    ]);
    Ok(sys)
}

/// Scalar linear test equation `u' = λu`.
pub fn make_linear_scalar(lambda: f64, u0: f64) -> Result<OdeSystem> {
    let sys = OdeSystem::new("linear", vec![u0], move |_t, u, du| du[0] = lambda * u[0])?
        .with_jacobian(move |_t, _u, j| j[(0, 0)] = lambda)
        .with_params([("lambda", lambda)]);
    Ok(sys)
}

/// Builds a built-in system by name, applying parameter overrides.
pub fn by_name(name: &str, overrides: &BTreeMap<String, f64>) -> Result<OdeSystem> {
    let get = |key: &str, default: f64| overrides.get(key).copied().unwrap_or(default);
    let known = |keys: &[&str]| -> Result<()> {
        for k in overrides.keys() {
            if !keys.contains(&k.as_str()) {
                return Err(invalid(k, format!("unknown parameter for `{name}`")));
            }
        }
        Ok(())
    };
    match name {
        "brusselator" => {
            known(&["A", "B"])?;
            make_brusselator(get("A", 1.0), get("B", 3.0))
        }
        "van_der_pol" | "vdp" => {
            known(&["mu"])?;
            make_van_der_pol(get("mu", 4.0))
        }
        "oregonator" => {
            known(&["s", "q", "w"])?;
            let d = OregonatorParams::default();
            make_oregonator(OregonatorParams {
                s: get("s", d.s),
                q: get("q", d.q),
                w: get("w", d.w),
                u0: d.u0,
            })
        }
        "seir" => {
            known(&[
                "beta0",
                "alpha",
                "kappa",
                "severe_fraction",
                "lambda",
                "sigma",
                "gamma",
                "mu",
                "importation",
            ])?;
            let d = SeirParams::default();
            make_seir(SeirParams {
                beta0: get("beta0", d.beta0),
                alpha: get("alpha", d.alpha),
                kappa: get("kappa", d.kappa),
                severe_fraction: get("severe_fraction", d.severe_fraction),
                lambda: get("lambda", d.lambda),
                sigma: get("sigma", d.sigma),
                gamma: get("gamma", d.gamma),
                mu: get("mu", d.mu),
                importation: get("importation", d.importation),
                u0: d.u0,
            })
        }
        "linear" => {
            known(&["lambda", "u0"])?;
            make_linear_scalar(get("lambda", -1.0), get("u0", 1.0))
        }
        other => Err(invalid("problem", format!("unknown problem `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Complex;
    use proptest::prelude::*;

    #[test]
    fn brusselator_fixed_point_and_initial_data() {
        let sys = make_brusselator(1.0, 3.0).unwrap();
        assert_eq!(sys.rhs(0.0, &[1.0, 3.0]), vec![0.0, 0.0]);
        assert_eq!(sys.rhs(0.0, &[0.0, 1.0]), vec![1.0, 0.0]);
        assert_eq!(sys.u0(), &[0.0, 1.0]);
    }

    #[test]
    fn brusselator_rejects_nonpositive() {
        assert!(make_brusselator(0.0, 3.0).is_err());
        assert!(make_brusselator(1.0, -1.0).is_err());
    }

    #[test]
    fn brusselator_unstable_fixed_point_when_b_large() {
        for (a, b) in [(1.0, 3.0), (1.0, 2.5), (0.5, 1.5), (2.0, 6.0)] {
            assert!(b > 1.0 + a * a);
            let sys = make_brusselator(a, b).unwrap();
            let j = sys.jacobian(0.0, &[a, b / a]);
            let eig = j.complex_eigenvalues();
            assert!(eig.iter().any(|z: &Complex<f64>| z.re > 0.0), "{a} {b}: {eig}");
        }
    }

    #[test]
    fn van_der_pol_examples() {
        let sys = make_van_der_pol(0.0).unwrap();
        assert_eq!(sys.rhs(0.0, &[2.0, 0.0]), vec![0.0, -2.0]);
        let sys = make_van_der_pol(4.0).unwrap();
        assert_eq!(sys.u0(), &[2.0, 0.0]);
        assert_eq!(sys.rhs(0.0, &[0.0, 1.0]), vec![1.0, 4.0]);
        assert!(make_van_der_pol(-0.1).is_err());
    }

    #[test]
    fn oregonator_steady_state() {
        let sys = make_oregonator(OregonatorParams::default()).unwrap();
        assert_eq!(sys.dim(), 3);
        // positive root of the steady-state equations, computed offline with
        // a 40-digit root finder
        let y1 = 488.178_033_217_428_07;
        let y2 = 0.997_955_754_485_902_02;
        let f = sys.rhs(0.0, &[y1, y2, y1]);
        assert!(f.iter().all(|v| v.abs() <= 1e-10), "{f:?}");
        let g = sys.rhs(0.0, &[y1, y2, y1]);
        assert_eq!(f, g);
        assert!(make_oregonator(OregonatorParams {
            q: 0.0,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn seir_structure() {
        let p = SeirParams::default();
        let sys = make_seir(p).unwrap();
        assert_eq!(sys.dim(), SEIR_COMPARTMENTS.len());

        // population balance: d/dt (S+E+I+R) = -mu (S+E+I+R)
        let u = [0.7, 0.05, 0.02, 0.2, 0.97, 0.001, 0.1];
        let f = sys.rhs(3.0, &u);
        let total: f64 = f[..4].iter().sum();
        let pop: f64 = u[..4].iter().sum();
        assert_relative_eq!(total, -p.mu * pop, epsilon = 1e-15);
        assert_relative_eq!(f[4], -p.mu * u[4], epsilon = 1e-15);

        // disease-free equilibrium
        let u = [0.9, 0.0, 0.0, 0.1, 1.0, 0.0, 0.0];
        let f = sys.rhs(0.0, &u);
        assert_eq!(f[1], 0.0);
        assert_eq!(f[2], 0.0);

        assert!(make_seir(SeirParams {
            sigma: 0.0,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn fd_jacobian_linear_and_constant() {
        let lam = [[-2.0, 1.0, 0.5], [0.0, -3.0, 4.0], [1.5, 0.0, -0.25]];
        let sys = OdeSystem::new("lin3", vec![1.0, 2.0, 3.0], move |_t, u, du| {
            for i in 0..3 {
                du[i] = (0..3).map(|j| lam[i][j] * u[j]).sum();
            }
        })
        .unwrap();
        let j = finite_difference_jacobian(&sys, 0.0, &[0.3, -1.2, 7.0]);
        for i in 0..3 {
            for k in 0..3 {
                let want: f64 = lam[i][k];
                assert!((j[(i, k)] - want).abs() <= 1e-7 * want.abs().max(1.0));
            }
        }

        let sys = OdeSystem::new("const", vec![1.0, 1.0], |_t, _u, du| {
            du[0] = 3.0;
            du[1] = -1.0;
        })
        .unwrap();
        let j = finite_difference_jacobian(&sys, 0.0, &[1.0, 5.0]);
        assert!(j.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn fd_jacobian_brusselator_at_initial_state() {
        let sys = make_brusselator(1.0, 3.0).unwrap();
        let j = finite_difference_jacobian(&sys, 0.0, &[0.0, 1.0]);
        // analytic value at (0, 1), A=1, B=3
        let want = [[-4.0, 0.0], [3.0, 0.0]];
        for i in 0..2 {
            for k in 0..2 {
                assert!((j[(i, k)] - want[i][k]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn by_name_resolves_and_rejects() {
        let mut o = BTreeMap::new();
        o.insert("mu".to_string(), 2.0);
        let sys = by_name("van_der_pol", &o).unwrap();
        assert_eq!(sys.params()["mu"], 2.0);
        assert!(by_name("brusselator", &o).is_err());
        assert!(by_name("lorenz", &BTreeMap::new()).is_err());
    }

    #[test]
    fn norms() {
        assert_eq!(StateNorm::Max.norm(&[1.0, -3.0, 2.0]), 3.0);
        assert_eq!(StateNorm::Euclidean.norm(&[3.0, 4.0]), 5.0);
        assert_eq!(StateNorm::Max.distance(&[1.0, 2.0], &[1.5, 0.0]), 2.0);
    }

    fn check_jacobian(sys: &OdeSystem, u: &[f64]) -> std::result::Result<(), TestCaseError> {
        let analytic = sys.jacobian(0.0, u);
        let fd = finite_difference_jacobian(sys, 0.0, u);
        let scale = analytic.amax().max(1.0);
        for (a, b) in analytic.iter().zip(fd.iter()) {
            prop_assert!((a - b).abs() <= 1e-5 * scale, "{analytic} vs {fd}");
        }
        Ok(())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn brusselator_jacobian_matches_fd(x in -5.0..5.0f64, y in -5.0..5.0f64) {
            check_jacobian(&make_brusselator(1.0, 3.0).unwrap(), &[x, y])?;
        }

        #[test]
        fn van_der_pol_jacobian_matches_fd(x in -5.0..5.0f64, y in -5.0..5.0f64) {
            check_jacobian(&make_van_der_pol(4.0).unwrap(), &[x, y])?;
        }

        #[test]
        fn oregonator_jacobian_matches_fd(
            a in 0.0..1000.0f64, b in 0.0..1500.0f64, c in 0.0..2000.0f64,
        ) {
            check_jacobian(&make_oregonator(OregonatorParams::default()).unwrap(), &[a, b, c])?;
        }

        #[test]
        fn rhs_is_deterministic(x in -5.0..5.0f64, y in -5.0..5.0f64) {
            let sys = make_van_der_pol(4.0).unwrap();
            let a = sys.rhs(1.0, &[x, y]);
            let b = sys.rhs(1.0, &[x, y]);
            prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }
}

//! Tolerance-to-accuracy charts.
//!
//! A chart records, for a list of local tolerances (`atol = rtol = tol`),
//! the global error a solver actually achieves over `[0, T]`, measured
//! against a reference solution at evenly spaced checkpoints. Queries run the
//! other way: given a required accuracy, which tolerance delivers it.
//!
//! The sampled errors are first projected onto a monotone sequence (isotonic
//! regression in log space) and then interpolated with a shape-preserving
//! cubic in log-log coordinates, so the map can be inverted by bisection.

use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::integrators::{propagate_through, reference_solve_at, Method, SolverConfig, Status};
use crate::problems::{OdeSystem, State};

/// Number of evenly spaced checkpoints on which chart errors are measured.
pub const CHART_CHECKPOINTS: usize = 20;

/// Fewest distinct tolerance samples a chart can be built from.
pub const MIN_SAMPLES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartSample {
    pub tol: f64,
    pub eps: f64,
}

/// Side of the sampled range a query fell off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clamp {
    /// Required accuracy is tighter than the tightest sample achieves.
    TooTight,
    /// Required accuracy is looser than the loosest sample achieves.
    TooLoose,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartQuery {
    pub tol: f64,
    pub clamped: Option<Clamp>,
}

/// Reference states on the chart checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartReference {
    pub times: Vec<f64>,
    pub states: Vec<State>,
}

impl ChartReference {
    /// Reference solution on [`CHART_CHECKPOINTS`] uniform times in `(0, t_end]`.
    pub fn compute(system: &OdeSystem, t_end: f64) -> Result<Self> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(invalid("t_end", "must be positive"));
        }
        let mut grid = Vec::with_capacity(CHART_CHECKPOINTS + 1);
        grid.push(0.0);
        grid.extend((1..=CHART_CHECKPOINTS).map(|i| t_end * i as f64 / CHART_CHECKPOINTS as f64));
        let mut states = reference_solve_at(system, &grid)?;
        states.remove(0);
        grid.remove(0);
        Ok(Self { times: grid, states })
    }

    pub fn t_end(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }
}

/// Monotone map between a solver's tolerance parameter and its achieved
/// global accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyChart {
    system_id: String,
    method: Method,
    t_end: f64,
    /// Sorted by increasing tolerance.
    samples: Vec<ChartSample>,
    log_tol: Vec<f64>,
    /// Isotonic fit of `ln eps`, nondecreasing in tolerance.
    log_eps: Vec<f64>,
    slopes: Vec<f64>,
}

impl AccuracyChart {
    /// Builds a chart from measured `(tol, eps)` pairs in any order.
    pub fn from_samples(
        system_id: impl Into<String>,
        method: Method,
        t_end: f64,
        samples: impl IntoIterator<Item = (f64, f64)>,
    ) -> Result<Self> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(invalid("t_end", "must be positive"));
        }
        let mut samples: Vec<ChartSample> = samples
            .into_iter()
            .map(|(tol, eps)| ChartSample { tol, eps })
            .collect();
        if let Some(bad) = samples
            .iter()
            .find(|s| !(s.tol > 0.0 && s.eps > 0.0 && s.tol.is_finite() && s.eps.is_finite()))
        {
            return Err(Error::Calibration(format!(
                "sample ({}, {}) is not strictly positive",
                bad.tol, bad.eps
            )));
        }
        samples.sort_by(|a, b| a.tol.total_cmp(&b.tol));
        let before = samples.len();
        samples.dedup_by(|a, b| a.tol == b.tol);
        if samples.len() < before {
            warn!("chart: collapsed {} duplicate tolerance sample(s)", before - samples.len());
        }
        if samples.len() < MIN_SAMPLES {
            return Err(Error::Calibration(format!(
                "{} usable samples, need at least {MIN_SAMPLES}",
                samples.len()
            )));
        }

        let log_tol: Vec<f64> = samples.iter().map(|s| s.tol.ln()).collect();
        let raw: Vec<f64> = samples.iter().map(|s| s.eps.ln()).collect();
        let log_eps = isotonic_increasing(&raw);
        let slopes = pchip_slopes(&log_tol, &log_eps);
        Ok(Self {
            system_id: system_id.into(),
            method,
            t_end,
            samples,
            log_tol,
            log_eps,
            slopes,
        })
    }

    pub fn system_id(&self) -> &str {
        &self.system_id
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Measured samples, sorted by increasing tolerance.
    pub fn samples(&self) -> &[ChartSample] {
        &self.samples
    }

    /// Regularized accuracy at each sample, in sample order.
    pub fn fitted_eps(&self) -> Vec<f64> {
        self.log_eps.iter().map(|v| v.exp()).collect()
    }

    pub fn tol_range(&self) -> (f64, f64) {
        (self.samples[0].tol, self.samples[self.samples.len() - 1].tol)
    }

    /// Accuracy predicted at `tol`, clamped to the sampled range.
    pub fn eps_at(&self, tol: f64) -> f64 {
        self.log_eps_at(tol.ln()).exp()
    }

    fn log_eps_at(&self, x: f64) -> f64 {
        let xs = &self.log_tol;
        let last = xs.len() - 1;
        if x <= xs[0] {
            return self.log_eps[0];
        }
        if x >= xs[last] {
            return self.log_eps[last];
        }
        let i = xs.partition_point(|&v| v <= x) - 1;
        hermite(
            xs[i],
            xs[i + 1],
            self.log_eps[i],
            self.log_eps[i + 1],
            self.slopes[i],
            self.slopes[i + 1],
            x,
        )
    }

    /// Loosest tolerance whose predicted accuracy is at most `zeta`, with
    /// the clamp side when `zeta` lies outside the sampled accuracies.
    pub fn query(&self, zeta: f64) -> ChartQuery {
        let (lo, hi) = self.tol_range();
        let z = zeta.ln();
        let last = self.log_eps.len() - 1;
        if zeta.is_nan() || z < self.log_eps[0] {
            return ChartQuery {
                tol: lo,
                clamped: Some(Clamp::TooTight),
            };
        }
        if z > self.log_eps[last] {
            return ChartQuery {
                tol: hi,
                clamped: Some(Clamp::TooLoose),
            };
        }
        let (mut a, mut b) = (lo.ln(), hi.ln());
        if self.log_eps_at(b) <= z {
            return ChartQuery { tol: hi, clamped: None };
        }
        // invariant: eps(a) <= zeta < eps(b)
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            if self.log_eps_at(m) <= z {
                a = m;
            } else {
                b = m;
            }
        }
        ChartQuery {
            tol: a.exp(),
            clamped: None,
        }
    }

    /// [`AccuracyChart::query`], logging a warning when the result is clamped.
    pub fn tol_for_accuracy(&self, zeta: f64) -> f64 {
        let q = self.query(zeta);
        match q.clamped {
            Some(Clamp::TooTight) => warn!(
                "chart {}/{}: accuracy {zeta:e} is beyond the tightest sample, using tol {:e}",
                self.system_id,
                self.method.as_str(),
                q.tol
            ),
            Some(Clamp::TooLoose) => log::debug!(
                "chart {}/{}: accuracy {zeta:e} is looser than every sample, using tol {:e}",
                self.system_id,
                self.method.as_str(),
                q.tol
            ),
            None => {}
        }
        q.tol
    }

    /// Fails unless the chart was calibrated over the horizon `t_end`.
    pub fn check_horizon(&self, t_end: f64) -> Result<()> {
        if (self.t_end - t_end).abs() > 1e-9 * t_end.abs().max(1.0) {
            return Err(Error::ChartMismatch(format!(
                "chart calibrated for T = {}, run uses T = {t_end}",
                self.t_end
            )));
        }
        Ok(())
    }

    pub fn check_provenance(&self, system_id: &str, method: Method) -> Result<()> {
        if self.system_id != system_id || self.method != method {
            return Err(Error::ChartMismatch(format!(
                "chart is for {}/{}, needed {system_id}/{}",
                self.system_id,
                self.method.as_str(),
                method.as_str()
            )));
        }
        Ok(())
    }

    /// Text form: a `# key = value` provenance header, then `tol,eps` rows.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# system = {}", self.system_id);
        let _ = writeln!(s, "# method = {}", self.method.as_str());
        let _ = writeln!(s, "# t_end = {:e}", self.t_end);
        let _ = writeln!(s, "# samples = {}", self.samples.len());
        s.push_str("tol,eps\n");
        for p in &self.samples {
            let _ = writeln!(s, "{:e},{:e}", p.tol, p.eps);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut system = None;
        let mut method = None;
        let mut t_end = None;
        let mut samples = Vec::new();
        let mut header_seen = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |reason: String| Error::ChartFormat { line: i + 1, reason };
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let Some((k, v)) = meta.split_once('=') else {
                    continue;
                };
                let v = v.trim();
                match k.trim() {
                    "system" => system = Some(v.to_string()),
                    "method" => {
                        method = Some(Method::parse(v).ok_or_else(|| err(format!("unknown method `{v}`")))?)
                    }
                    "t_end" => t_end = Some(v.parse::<f64>().map_err(|e| err(e.to_string()))?),
                    _ => {}
                }
                continue;
            }
            if !header_seen {
                if line != "tol,eps" {
                    return Err(err(format!("expected `tol,eps` header, found `{line}`")));
                }
                header_seen = true;
                continue;
            }
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| err("expected two comma-separated values".into()))?;
            let tol = a.trim().parse::<f64>().map_err(|e| err(e.to_string()))?;
            let eps = b.trim().parse::<f64>().map_err(|e| err(e.to_string()))?;
            samples.push((tol, eps));
        }
        let missing = |what: &str| Error::ChartFormat {
            line: 0,
            reason: format!("missing `{what}` in header"),
        };
        Self::from_samples(
            system.ok_or_else(|| missing("system"))?,
            method.ok_or_else(|| missing("method"))?,
            t_end.ok_or_else(|| missing("t_end"))?,
            samples,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Achieved accuracy of one sequential solve at tolerance `tol`: the largest
/// state error over the reference checkpoints.
pub fn measure_accuracy(
    system: &OdeSystem,
    base: &SolverConfig,
    tol: f64,
    reference: &ChartReference,
) -> Result<f64> {
    let cfg = base.with_tol(tol);
    let (states, _, status) = propagate_through(system, 0.0, &reference.times, system.u0(), &cfg)?;
    if status != Status::Converged {
        return Err(Error::Propagation {
            t0: 0.0,
            t1: reference.t_end(),
            status,
        });
    }
    let norm = system.norm();
    Ok(states
        .iter()
        .zip(&reference.states)
        .map(|(y, r)| norm.distance(y, r))
        .fold(0.0, f64::max))
}

/// Runs the solver described by `base` once per tolerance over
/// `[0, reference.t_end()]` and fits a chart to the achieved accuracies.
///
/// Solves that fail are dropped from the chart; fewer than [`MIN_SAMPLES`]
/// survivors is an error.
pub fn build_chart(
    system: &OdeSystem,
    base: &SolverConfig,
    tols: &[f64],
    reference: &ChartReference,
) -> Result<AccuracyChart> {
    base.validate()?;
    if reference.states.is_empty() {
        return Err(Error::Calibration("empty reference".into()));
    }
    let mut unique = tols.to_vec();
    unique.sort_by(|a, b| b.total_cmp(a));
    unique.dedup();
    if unique.len() < tols.len() {
        warn!("chart: collapsed {} duplicate tolerance(s)", tols.len() - unique.len());
    }
    if unique.len() < MIN_SAMPLES {
        return Err(Error::Calibration(format!(
            "{} distinct tolerances given, need at least {MIN_SAMPLES}",
            unique.len()
        )));
    }
    let measured: Vec<Result<f64>> = unique
        .par_iter()
        .map(|&tol| measure_accuracy(system, base, tol, reference))
        .collect();
    let mut samples = Vec::with_capacity(unique.len());
    for (tol, r) in unique.iter().zip(measured) {
        match r {
            // an exact hit carries no information in log space
            Ok(eps) if eps > 0.0 => samples.push((*tol, eps)),
            Ok(_) => warn!("chart: tol {tol:e} reproduced the reference exactly, sample dropped"),
            Err(e) => warn!("chart: tol {tol:e} failed ({e}), sample dropped"),
        }
    }
    AccuracyChart::from_samples(system.name(), base.method, reference.t_end(), samples)
}

/// Least-squares nondecreasing fit (pool adjacent violators).
pub fn isotonic_increasing(values: &[f64]) -> Vec<f64> {
    // blocks of (mean, weight)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, w2) = blocks[blocks.len() - 1];
            let (m1, w1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let w = w1 + w2;
            *blocks.last_mut().unwrap() = ((m1 * w1 as f64 + m2 * w2 as f64) / w as f64, w);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, w)| std::iter::repeat_n(m, w))
        .collect()
}

/// Node derivatives of the monotone piecewise cubic Hermite interpolant.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let d: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut m = vec![0.0; n];
    if n == 2 {
        m[0] = d[0];
        m[1] = d[0];
        return m;
    }
    for k in 1..n - 1 {
        if d[k - 1] * d[k] <= 0.0 {
            m[k] = 0.0;
        } else {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            m[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
        }
    }
    m[0] = end_slope(h[0], h[1], d[0], d[1]);
    m[n - 1] = end_slope(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
    m
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m.signum() != d0.signum() || d0 == 0.0 {
        0.0
    } else if d0.signum() != d1.signum() && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, m0: f64, m1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let s = (x - x0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * h * m0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * h * m1
}

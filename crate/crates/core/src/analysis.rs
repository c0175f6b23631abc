//! Cost aggregation, speedup and efficiency, and the theoretical bounds.
//!
//! Parallel cost follows the critical path: a coarse sweep is sequential
//! and contributes the sum of its interval costs, a fine stage contributes
//! the cost of its slowest interval. For a run that stopped after `K`
//! iterations the coarse sweeps of rows `0..=K` and the fine stages
//! `0..K` are counted. The total work (plain sum over every propagation)
//! is reported alongside.

use crate::error::{invalid, Error, Result};
use crate::integrators::{CostCounters, SolverConfig};
use crate::parareal::{HypothesisConstants, PararealRun, SolverSetup, ToleranceSchedule};
use crate::problems::OdeSystem;

/// Scalar weight of each cost counter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub accepted_steps: f64,
    pub rejected_steps: f64,
    pub rhs_evals: f64,
    pub jac_evals: f64,
    pub lin_solves: f64,
}

impl CostWeights {
    /// Defaults for a system of dimension `dim`: a Jacobian costs `dim`, a
    /// linear solve `dim^2`.
    pub fn for_dim(dim: usize) -> Self {
        let d = dim as f64;
        Self {
            accepted_steps: 1.0,
            rejected_steps: 0.0,
            rhs_evals: 1.0,
            jac_evals: d,
            lin_solves: d * d,
        }
    }

    pub fn apply(&self, c: &CostCounters) -> f64 {
        self.accepted_steps * c.accepted_steps as f64
            + self.rejected_steps * c.rejected_steps as f64
            + self.rhs_evals * c.rhs_evals as f64
            + self.jac_evals * c.jac_evals as f64
            + self.lin_solves * c.lin_solves as f64
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.accepted_steps,
            self.rejected_steps,
            self.rhs_evals,
            self.jac_evals,
            self.lin_solves,
        ];
        if all.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(invalid("weights", "must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostMode {
    /// Weighted counters of the propagations actually performed.
    Measured,
    /// Fine cost `width * zeta^(-1/alpha)`, coarse cost zero.
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub mode: CostMode,
    pub alpha: f64,
    pub weights: CostWeights,
    /// Added once per fine stage.
    pub comm_delay: f64,
}

impl CostModel {
    pub fn measured(dim: usize) -> Self {
        Self {
            mode: CostMode::Measured,
            alpha: 1.0,
            weights: CostWeights::for_dim(dim),
            comm_delay: 0.0,
        }
    }

    pub fn synthetic(alpha: f64) -> Self {
        Self {
            mode: CostMode::Synthetic,
            alpha,
            weights: CostWeights::for_dim(1),
            comm_delay: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid("alpha", "must be positive"));
        }
        if !(self.comm_delay >= 0.0 && self.comm_delay.is_finite()) {
            return Err(invalid("comm_delay", "must be nonnegative"));
        }
        self.weights.validate()
    }

    /// Synthetic cost of reaching accuracy `zeta` over a span `width`.
    pub fn synthetic_cost(&self, width: f64, zeta: f64) -> f64 {
        width * zeta.powf(-1.0 / self.alpha)
    }
}

/// Cost of a run under both accounting rules.
#[derive(Debug, Clone, PartialEq)]
pub struct CostBreakdown {
    /// Coarse sweep cost per row.
    pub coarse: Vec<f64>,
    /// Slowest fine interval per stage.
    pub fine_critical: Vec<f64>,
    /// Sum over intervals per stage.
    pub fine_work: Vec<f64>,
    pub comm: f64,
}

impl CostBreakdown {
    pub fn critical_path(&self, include_coarse: bool) -> f64 {
        let fine: f64 = self.fine_critical.iter().sum();
        let coarse: f64 = if include_coarse { self.coarse.iter().sum() } else { 0.0 };
        fine + coarse + self.comm
    }

    pub fn work_total(&self, include_coarse: bool) -> f64 {
        let fine: f64 = self.fine_work.iter().sum();
        let coarse: f64 = if include_coarse { self.coarse.iter().sum() } else { 0.0 };
        fine + coarse + self.comm
    }
}

fn check_complete(run: &PararealRun) -> Result<()> {
    let k = run
        .converged_at()
        .ok_or_else(|| Error::IncompleteRun(format!("{:?}", run.outcome)))?;
    if run.coarse_costs.len() != k + 1 || run.fine_costs.len() != k || run.zetas.len() != k {
        return Err(Error::IncompleteRun(format!(
            "converged at {k} but holds {} coarse sweeps and {} fine stages",
            run.coarse_costs.len(),
            run.fine_costs.len()
        )));
    }
    Ok(())
}

pub fn cost_breakdown(run: &PararealRun, model: &CostModel) -> Result<CostBreakdown> {
    model.validate()?;
    check_complete(run)?;
    let p = &run.partition;
    let (coarse, fine_critical, fine_work) = match model.mode {
        CostMode::Measured => {
            let w = &model.weights;
            let coarse = run
                .coarse_costs
                .iter()
                .map(|row| row.iter().map(|c| w.apply(c)).sum())
                .collect();
            let per: Vec<Vec<f64>> = run
                .fine_costs
                .iter()
                .map(|row| row.iter().map(|c| w.apply(c)).collect())
                .collect();
            let crit = per.iter().map(|r| r.iter().copied().fold(0.0, f64::max)).collect();
            let work = per.iter().map(|r| r.iter().sum()).collect();
            (coarse, crit, work)
        }
        CostMode::Synthetic => {
            let coarse = vec![0.0; run.coarse_costs.len()];
            let per: Vec<Vec<f64>> = run
                .zetas
                .iter()
                .map(|&z| (0..p.intervals()).map(|n| model.synthetic_cost(p.width(n), z)).collect())
                .collect();
            let crit = per.iter().map(|r| r.iter().copied().fold(0.0, f64::max)).collect();
            let work = per.iter().map(|r| r.iter().sum()).collect();
            (coarse, crit, work)
        }
    };
    Ok(CostBreakdown {
        coarse,
        fine_critical,
        fine_work,
        comm: model.comm_delay * run.fine_costs.len() as f64,
    })
}

/// Critical-path cost of a converged run.
pub fn aggregate_cost(run: &PararealRun, model: &CostModel, include_coarse: bool) -> Result<f64> {
    Ok(cost_breakdown(run, model)?.critical_path(include_coarse))
}

/// Cost of one sequential fine solve over `[0, t_end]` at accuracy `eta/2`.
pub fn sequential_cost(
    system: &OdeSystem,
    t_end: f64,
    fine: &SolverSetup,
    eta: f64,
    model: &CostModel,
) -> Result<f64> {
    model.validate()?;
    match model.mode {
        CostMode::Synthetic => Ok(model.synthetic_cost(t_end, 0.5 * eta)),
        CostMode::Measured => {
            let cfg: SolverConfig = fine.config_for(0.5 * eta);
            let r = crate::integrators::propagate(system, 0.0, t_end, system.u0(), &cfg, None)?.into_result()?;
            Ok(model.weights.apply(&r.cost))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedupPair {
    pub cost_ap: f64,
    pub cost_cp: f64,
    pub speedup_ap: f64,
    pub speedup_cp: f64,
    pub efficiency_ap: f64,
    pub efficiency_cp: f64,
}

impl SpeedupPair {
    fn new(cost_seq: f64, cost_ap: f64, cost_cp: f64, intervals: usize) -> Self {
        let speedup_ap = cost_seq / cost_ap;
        let speedup_cp = cost_seq / cost_cp;
        Self {
            cost_ap,
            cost_cp,
            speedup_ap,
            speedup_cp,
            efficiency_ap: speedup_ap / intervals as f64,
            efficiency_cp: speedup_cp / intervals as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedupReport {
    pub intervals: usize,
    pub eta: f64,
    pub t_end: f64,
    pub cost_seq: f64,
    pub converged_ap: usize,
    pub converged_cp: usize,
    pub with_coarse: SpeedupPair,
    pub without_coarse: SpeedupPair,
    /// Total-work variants (sum over intervals instead of the slowest one).
    pub work_with_coarse: SpeedupPair,
}

/// One line of a speedup table.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupRow {
    pub algorithm: &'static str,
    pub with_coarse: bool,
    pub speedup: f64,
    pub efficiency: f64,
}

impl SpeedupReport {
    pub fn rows(&self) -> Vec<SpeedupRow> {
        let mut out = Vec::with_capacity(4);
        for (with_coarse, pair) in [(true, &self.with_coarse), (false, &self.without_coarse)] {
            out.push(SpeedupRow {
                algorithm: "classical",
                with_coarse,
                speedup: pair.speedup_cp,
                efficiency: pair.efficiency_cp,
            });
            out.push(SpeedupRow {
                algorithm: "adaptive",
                with_coarse,
                speedup: pair.speedup_ap,
                efficiency: pair.efficiency_ap,
            });
        }
        out
    }
}

/// Speedups of an adaptive and a classical run against a sequential solve
/// of cost `cost_seq`.
pub fn speedup_report(
    run_ap: &PararealRun,
    run_cp: &PararealRun,
    cost_seq: f64,
    model: &CostModel,
) -> Result<SpeedupReport> {
    if run_ap.eta() != run_cp.eta() {
        return Err(Error::TargetMismatch(run_ap.eta(), run_cp.eta()));
    }
    if run_ap.intervals() != run_cp.intervals() {
        return Err(invalid("runs", "interval counts differ"));
    }
    if !(cost_seq > 0.0 && cost_seq.is_finite()) {
        return Err(invalid("cost_seq", "must be positive"));
    }
    let ap = cost_breakdown(run_ap, model)?;
    let cp = cost_breakdown(run_cp, model)?;
    let n = run_ap.intervals();
    Ok(SpeedupReport {
        intervals: n,
        eta: run_ap.eta(),
        t_end: run_ap.partition.t_end(),
        cost_seq,
        converged_ap: run_ap.converged_at().unwrap_or(0),
        converged_cp: run_cp.converged_at().unwrap_or(0),
        with_coarse: SpeedupPair::new(cost_seq, ap.critical_path(true), cp.critical_path(true), n),
        without_coarse: SpeedupPair::new(cost_seq, ap.critical_path(false), cp.critical_path(false), n),
        work_with_coarse: SpeedupPair::new(cost_seq, ap.work_total(true), cp.work_total(true), n),
    })
}

fn factorial(k: usize) -> f64 {
    (2..=k).map(|j| j as f64).product()
}

/// `mu tau^(k+1) / (k+1)!`.
pub fn ideal_bound(c: &HypothesisConstants, k: usize) -> f64 {
    bound(c.mu(), c.tau(), k)
}

/// `mu tau_tilde^(k+1) / (k+1)!`.
pub fn perturbed_bound(c: &HypothesisConstants, k: usize) -> f64 {
    bound(c.mu(), c.tau_tilde(), k)
}

fn bound(mu: f64, tau: f64, k: usize) -> f64 {
    if tau == 0.0 {
        return 0.0;
    }
    mu * tau.powi(k as i32 + 1) / factorial(k + 1)
}

/// Asymptotic efficiency `1 / (1 + eps_g^(1/alpha))` when the coarse cost
/// is negligible.
pub fn ideal_efficiency(eps_g: f64, alpha: f64) -> f64 {
    1.0 / (1.0 + eps_g.powf(1.0 / alpha))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticCheck {
    pub computed_efficiency: f64,
    pub model_efficiency: f64,
    /// Computed over model efficiency.
    pub ratio: f64,
    pub cost_ap: f64,
    pub cost_cp: f64,
    pub cost_seq: f64,
    /// `K / (1 + eps_g^(1/alpha))`.
    pub model_cost_ratio: f64,
}

impl SyntheticCheck {
    pub fn cost_ratio(&self) -> f64 {
        self.cost_cp / self.cost_ap
    }
}

/// Efficiency of the adaptive algorithm under the synthetic cost model with
/// the theoretical schedule and `K` fine stages, on `intervals` uniform
/// intervals of unit width, ignoring coarse cost.
pub fn synthetic_efficiency_check(eps_g: f64, alpha: f64, k: usize, intervals: usize) -> Result<SyntheticCheck> {
    if !(eps_g > 0.0 && eps_g < 1.0) {
        return Err(invalid("eps_g", "must lie in (0, 1)"));
    }
    if k == 0 || intervals == 0 {
        return Err(invalid("K", "K and the interval count must be positive"));
    }
    let model = CostModel::synthetic(alpha);
    model.validate()?;
    let schedule = ToleranceSchedule::theoretical(eps_g, eps_g);
    let dt = 1.0;
    // stages run in parallel over equal intervals: one interval's cost each
    let cost_ap: f64 = (0..k).map(|j| model.synthetic_cost(dt, schedule.zeta(j))).sum();
    let last = model.synthetic_cost(dt, schedule.zeta(k - 1));
    let cost_cp = k as f64 * last;
    let cost_seq = intervals as f64 * last;
    let computed_efficiency = cost_seq / cost_ap / intervals as f64;
    let model_efficiency = ideal_efficiency(eps_g, alpha);
    Ok(SyntheticCheck {
        computed_efficiency,
        model_efficiency,
        ratio: computed_efficiency / model_efficiency,
        cost_ap,
        cost_cp,
        cost_seq,
        model_cost_ratio: k as f64 * model_efficiency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrators::Method;
    use crate::parareal::{Algorithm, AccuracyMap, RunOutcome};
    use crate::partition::TimePartition;
    use proptest::prelude::*;

    fn counters(n: u64) -> CostCounters {
        CostCounters {
            accepted_steps: n,
            rejected_steps: 0,
            rhs_evals: n,
            jac_evals: 0,
            lin_solves: 0,
        }
    }

    fn fake_run(k: usize, intervals: usize, fine: impl Fn(usize, usize) -> u64, coarse: u64) -> PararealRun {
        PararealRun {
            algorithm: Algorithm::Adaptive,
            partition: TimePartition::uniform(intervals as f64, intervals).unwrap(),
            schedule: ToleranceSchedule::theoretical(0.1, 1e-8),
            coarse_tol: 1e-3,
            states: vec![vec![vec![0.0]; intervals + 1]; k + 1],
            errors: vec![],
            increments: vec![0.0; k],
            coarse_costs: vec![vec![counters(coarse); intervals]; k + 1],
            fine_costs: (0..k)
                .map(|j| (0..intervals).map(|n| counters(fine(j, n))).collect())
                .collect(),
            zetas: (0..k).map(|j| ToleranceSchedule::theoretical(0.1, 1e-8).zeta(j)).collect(),
            fine_tols: vec![1e-6; k],
            reference: None,
            pilot_cost: CostCounters::default(),
            outcome: RunOutcome::Converged(k),
        }
    }

    #[test]
    fn uniform_single_stage_is_one_interval() {
        let run = fake_run(1, 4, |_, _| 5, 0);
        let m = CostModel::measured(1);
        // 5 steps + 5 rhs
        assert_eq!(aggregate_cost(&run, &m, false).unwrap(), 10.0);
        let b = cost_breakdown(&run, &m).unwrap();
        assert_eq!(b.work_total(false), 40.0);
    }

    #[test]
    fn zero_fine_without_coarse_is_zero() {
        let run = fake_run(2, 3, |_, _| 0, 7);
        assert_eq!(aggregate_cost(&run, &CostModel::measured(2), false).unwrap(), 0.0);
        // three sweeps of three intervals of 14 units
        assert_eq!(aggregate_cost(&run, &CostModel::measured(2), true).unwrap(), 126.0);
    }

    #[test]
    fn slowest_interval_sets_stage_cost() {
        let run = fake_run(2, 3, |j, n| (j as u64 + 1) * (n as u64 + 1), 0);
        let m = CostModel::measured(1);
        assert_eq!(aggregate_cost(&run, &m, false).unwrap(), 2.0 * (3.0 + 6.0));
    }

    #[test]
    fn synthetic_total_matches_direct_sum() {
        let run = fake_run(3, 4, |_, _| 1, 1);
        let m = CostModel::synthetic(1.0);
        // 1/0.01 + 2/0.001 + 6/0.0001
        let expected = 100.0 + 2000.0 + 60000.0;
        let got = aggregate_cost(&run, &m, true).unwrap();
        assert!((got - expected).abs() < 1e-9 * expected, "{got}");
    }

    #[test]
    fn comm_delay_counts_per_stage() {
        let run = fake_run(3, 2, |_, _| 1, 0);
        let mut m = CostModel::measured(1);
        let base = aggregate_cost(&run, &m, false).unwrap();
        m.comm_delay = 0.5;
        assert_eq!(aggregate_cost(&run, &m, false).unwrap(), base + 1.5);
    }

    #[test]
    fn incomplete_runs_are_rejected() {
        let mut run = fake_run(2, 2, |_, _| 1, 1);
        run.outcome = RunOutcome::Diverged;
        assert!(matches!(
            aggregate_cost(&run, &CostModel::measured(1), true),
            Err(Error::IncompleteRun(_))
        ));
        let mut run = fake_run(2, 2, |_, _| 1, 1);
        run.fine_costs.pop();
        assert!(aggregate_cost(&run, &CostModel::measured(1), true).is_err());
    }

    #[test]
    fn speedup_fields() {
        let ap = fake_run(1, 4, |_, _| 10, 0);
        let cp = fake_run(1, 4, |_, _| 10, 0);
        // cost_ap = 20 per critical path
        let r = speedup_report(&ap, &cp, 80.0, &CostModel::measured(1)).unwrap();
        assert_eq!(r.with_coarse.speedup_ap, 4.0);
        assert_eq!(r.with_coarse.speedup_ap, r.with_coarse.speedup_cp);
        assert_eq!(r.with_coarse.efficiency_ap, 1.0);
        assert_eq!(r.rows().len(), 4);

        let mut other = fake_run(1, 4, |_, _| 10, 0);
        other.schedule.eta = 1e-6;
        assert!(matches!(
            speedup_report(&ap, &other, 80.0, &CostModel::measured(1)),
            Err(Error::TargetMismatch(..))
        ));
    }

    #[test]
    fn efficiency_from_speedup() {
        // 50 intervals at speedup 7.38
        let pair = SpeedupPair::new(738.0, 100.0, 100.0, 50);
        assert!((pair.efficiency_ap - 0.1476).abs() < 1e-12);
    }

    #[test]
    fn bounds() {
        let c = HypothesisConstants::new(0.3, 1.5, 0.1, 10.0, 1.0, 2.0).unwrap();
        for k in 0..8 {
            let ratio = perturbed_bound(&c, k) / ideal_bound(&c, k);
            let expected = (1.0 + c.eps_bar()).powi(k as i32 + 1);
            assert!((ratio / expected - 1.0).abs() < 1e-12);
        }
        assert_eq!(bound(2.0, 0.0, 3), 0.0);
        assert!((bound(2.0, 0.1, 1) - 0.01).abs() < 1e-17);
    }

    #[test]
    fn ideal_efficiency_values() {
        assert!((ideal_efficiency(0.1, 1.0) - 1.0 / 1.1).abs() < 1e-15);
        // 1/(1+0.1^0.2) to 23 digits
        assert!((ideal_efficiency(0.1, 5.0) - 0.61313682015314303522509).abs() < 1e-15);
        assert!(ideal_efficiency(1e-12, 1.0) > 1.0 - 1e-11);
    }

    #[test]
    fn synthetic_single_stage_is_fully_efficient() {
        let c = synthetic_efficiency_check(0.1, 1.0, 1, 16).unwrap();
        assert_eq!(c.computed_efficiency, 1.0);
        assert_eq!(c.cost_ratio(), 1.0);
    }

    #[test]
    fn synthetic_alpha_one() {
        let c = synthetic_efficiency_check(0.1, 1.0, 5, 10).unwrap();
        // direct summation of 1/zeta_k, zeta_k = 0.1^(k+2)/(k+1)!
        let sum = 100.0 + 2000.0 + 60000.0 + 2.4e6 + 1.2e8;
        assert!((c.computed_efficiency - 1.2e8 / sum).abs() < 1e-12);
        assert!((c.ratio - 1.0).abs() <= 0.1);
    }

    #[test]
    fn measured_sequential_cost() {
        let sys = crate::problems::make_brusselator(1.0, 3.0).unwrap();
        let fine = SolverSetup::new(SolverConfig::new(Method::RadauIia5, 1e-6), AccuracyMap::Direct);
        let m = CostModel::measured(2);
        let loose = sequential_cost(&sys, 10.0, &fine, 1e-4, &m).unwrap();
        let tight = sequential_cost(&sys, 10.0, &fine, 1e-8, &m).unwrap();
        assert!(tight > loose && loose > 0.0);
        let s = sequential_cost(&sys, 10.0, &fine, 2e-4, &CostModel::synthetic(2.0)).unwrap();
        assert!((s - 10.0 * 1e-4f64.powf(-0.5)).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn aggregate_is_additive_and_monotone(
            costs in proptest::collection::vec(0u64..1000, 6),
            w in 0.0f64..5.0,
        ) {
            let run = fake_run(2, 3, |j, n| costs[j * 3 + n], 3);
            let m = CostModel::measured(1);
            let b = cost_breakdown(&run, &m).unwrap();
            let total = aggregate_cost(&run, &m, true).unwrap();
            let parts: f64 = b.coarse.iter().sum::<f64>() + b.fine_critical.iter().sum::<f64>();
            prop_assert!((total - parts).abs() < 1e-9);
            let mut heavier = m;
            heavier.weights.rhs_evals += w;
            prop_assert!(aggregate_cost(&run, &heavier, true).unwrap() >= total);
            prop_assert!(aggregate_cost(&run, &m, false).unwrap() <= total);
        }

        #[test]
        fn ideal_bound_eventually_decreases(mu in 0.1f64..10.0, tau in 0.01f64..5.0) {
            for k in 0..30usize {
                if tau / (k as f64 + 2.0) < 1.0 {
                    prop_assert!(bound(mu, tau, k + 1) < bound(mu, tau, k));
                }
            }
        }
    }
}

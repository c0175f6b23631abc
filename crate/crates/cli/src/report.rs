//! CSV and JSON output.

use std::path::Path;

use parareal_core::analysis::{CostMode, CostModel, SpeedupReport};
use parareal_core::parareal::RunOutcome;
use parareal_core::PararealRun;
use serde_json::{json, Value};

use crate::CliError;

fn sci(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// Coarse cost per row and slowest fine interval per stage. Unlike the
/// core breakdown this also works for runs that did not converge.
pub fn stage_costs(run: &PararealRun, model: &CostModel) -> (Vec<f64>, Vec<f64>) {
    match model.mode {
        CostMode::Measured => {
            let w = &model.weights;
            let coarse = run
                .coarse_costs
                .iter()
                .map(|row| row.iter().map(|c| w.apply(c)).sum())
                .collect();
            let fine = run
                .fine_costs
                .iter()
                .map(|row| row.iter().map(|c| w.apply(c)).fold(0.0, f64::max))
                .collect();
            (coarse, fine)
        }
        CostMode::Synthetic => {
            let p = &run.partition;
            let fine = run
                .zetas
                .iter()
                .map(|&z| (0..p.intervals()).map(|n| model.synthetic_cost(p.width(n), z)).fold(0.0, f64::max))
                .collect();
            (vec![0.0; run.coarse_costs.len()], fine)
        }
    }
}

/// One line per row: `k, max_error, zeta_k, fine_cost, coarse_cost`. The
/// fine columns of row `k` describe the stage that produced row `k + 1`.
pub fn write_history(path: &Path, run: &PararealRun, model: &CostModel) -> Result<(), CliError> {
    let (coarse, fine) = stage_costs(run, model);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "max_error", "zeta_k", "fine_cost", "coarse_cost"])?;
    for k in 0..run.states.len() {
        w.write_record([
            k.to_string(),
            sci(run.errors.get(k).copied()),
            sci(run.zetas.get(k).copied()),
            sci(fine.get(k).copied()),
            sci(coarse.get(k).copied()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn outcome_label(outcome: &RunOutcome) -> String {
    match outcome {
        RunOutcome::Converged(_) => "converged".into(),
        RunOutcome::Diverged => "diverged".into(),
        RunOutcome::Failed(e) => format!("failed: {e}"),
    }
}

pub fn run_summary(run: &PararealRun, model: &CostModel) -> Value {
    let (coarse, fine) = stage_costs(run, model);
    json!({
        "algorithm": run.algorithm.as_str(),
        "schedule": run.schedule.mode.as_str(),
        "status": outcome_label(&run.outcome),
        "converged_at": run.converged_at(),
        "iterations": run.iterations(),
        "k_anticipated": run.schedule.k_anticipated,
        "final_error": run.final_error(),
        "coarse_tol": run.coarse_tol,
        "boundaries": run.partition.boundaries(),
        "zetas": run.zetas,
        "fine_tols": run.fine_tols,
        "cost_coarse": coarse.iter().sum::<f64>(),
        "cost_fine_critical": fine.iter().sum::<f64>(),
        "pilot_cost": match model.mode {
            CostMode::Measured => Some(model.weights.apply(&run.pilot_cost)),
            CostMode::Synthetic => None,
        },
    })
}

pub fn speedup_summary(r: &SpeedupReport) -> Value {
    let pair = |p: &parareal_core::analysis::SpeedupPair| {
        json!({
            "cost_adaptive": p.cost_ap,
            "cost_classical": p.cost_cp,
            "speedup_adaptive": p.speedup_ap,
            "speedup_classical": p.speedup_cp,
            "efficiency_adaptive": p.efficiency_ap,
            "efficiency_classical": p.efficiency_cp,
        })
    };
    json!({
        "cost_sequential": r.cost_seq,
        "with_coarse": pair(&r.with_coarse),
        "without_coarse": pair(&r.without_coarse),
        "work_with_coarse": pair(&r.work_with_coarse),
    })
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// One line of the sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub t_end: f64,
    pub intervals: usize,
    pub eta: f64,
    pub algorithm: String,
    pub speedup_with_g: Option<f64>,
    pub speedup_without_g: Option<f64>,
    pub status: String,
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "T",
        "N",
        "eta",
        "algorithm",
        "speedup_with_G",
        "speedup_without_G",
        "efficiency_with_G",
        "efficiency_without_G",
        "status",
    ])?;
    for r in rows {
        let n = r.intervals as f64;
        w.write_record([
            format!("{:e}", r.t_end),
            r.intervals.to_string(),
            format!("{:e}", r.eta),
            r.algorithm.clone(),
            sci(r.speedup_with_g),
            sci(r.speedup_without_g),
            sci(r.speedup_with_g.map(|s| s / n)),
            sci(r.speedup_without_g.map(|s| s / n)),
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `k, E_k, ideal, perturbed` per row.
pub fn write_bounds(path: &Path, rows: &[(usize, f64, f64, f64)]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "E_k", "ideal", "perturbed"])?;
    for &(k, e, ideal, perturbed) in rows {
        w.write_record([k.to_string(), format!("{e:e}"), format!("{ideal:e}"), format!("{perturbed:e}")])?;
    }
    w.flush()?;
    Ok(())
}

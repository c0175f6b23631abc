use std::path::{Path, PathBuf};

use log::{info, warn};
use parareal_core::analysis::{
    aggregate_cost, ideal_bound, ideal_efficiency, perturbed_bound, sequential_cost, speedup_report, CostModel,
};
use parareal_core::calibration::{build_chart, ChartReference};
use parareal_core::parareal::{estimate_constants, run_adaptive, run_classical, PararealConfig, SolverPropagator};
use parareal_core::{OdeSystem, PararealRun};
use serde_json::json;

use crate::config::RunConfig;
use crate::report::{self, SweepRow};
use crate::{AlgorithmChoice, CliError, CommonArgs};

/// Default calibration tolerances, from loose to tight.
fn default_tolerances(hi: f64, lo: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 10f64.powf(hi + (lo - hi) * i as f64 / (n - 1) as f64))
        .collect()
}

fn out_dir(args: &CommonArgs, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn thread_pool(args: &CommonArgs, max_intervals: usize) -> Result<rayon::ThreadPool, CliError> {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let threads = if args.serial { 1 } else { max_intervals.min(cores).max(1) };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Io(e.to_string()))
}

fn chart_path(explicit: &Option<PathBuf>, dir: &Path, role: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| dir.join(format!("{role}_chart.txt")))
}

pub fn calibrate(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(&args.config)?;
    let system = cfg.system()?;
    let dir = out_dir(args, &cfg)?;
    let mut reference: Option<ChartReference> = None;
    let roles = [
        ("coarse", &cfg.solvers.coarse, default_tolerances(0.0, -12.0, 25)),
        ("fine", &cfg.solvers.fine, default_tolerances(-1.0, -12.0, 23)),
    ];
    for (role, section, defaults) in roles {
        let t_end = section.chart_t_end.unwrap_or(cfg.partition.t_end);
        if reference.as_ref().map_or(true, |r| r.t_end() != t_end) {
            reference = Some(ChartReference::compute(&system, t_end)?);
        }
        let tols = if section.tolerances.is_empty() {
            &defaults
        } else {
            &section.tolerances
        };
        let chart = build_chart(&system, &section.solver_config()?, tols, reference.as_ref().unwrap())?;
        let path = chart_path(&section.chart, &dir, role);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        chart.save(&path)?;
        let (lo, hi) = chart.tol_range();
        info!(
            "{role} chart: {} samples, tol in [{lo:e}, {hi:e}], written to {}",
            chart.samples().len(),
            path.display()
        );
    }
    Ok(())
}

struct Runs {
    classical: Option<PararealRun>,
    adaptive: Option<PararealRun>,
}

fn run_selected(
    system: &OdeSystem,
    cfg: &RunConfig,
    pcfg: &PararealConfig,
    intervals: usize,
    choice: AlgorithmChoice,
) -> Result<Runs, CliError> {
    let t_end = cfg.partition.t_end;
    let classical = if choice.classical() {
        Some(run_classical(system, t_end, intervals, pcfg)?)
    } else {
        None
    };
    let adaptive = if choice.adaptive() {
        Some(run_adaptive(system, t_end, intervals, cfg.mode()?, pcfg)?)
    } else {
        None
    };
    Ok(Runs { classical, adaptive })
}

fn log_run(run: &PararealRun) {
    match run.converged_at() {
        Some(k) => info!(
            "{}: converged at k = {k}, final error {}",
            run.algorithm.as_str(),
            run.final_error().map_or("n/a".into(), |e| format!("{e:.3e}"))
        ),
        None => warn!("{}: {}", run.algorithm.as_str(), report::outcome_label(&run.outcome)),
    }
}

pub fn run(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(&args.config)?;
    cfg.require_charts()?;
    let system = cfg.system()?;
    let model = cfg.cost_model()?;
    let dir = out_dir(args, &cfg)?;
    let intervals = cfg.partition.intervals;
    let eta = cfg.schedule.eta;
    let pcfg = cfg.parareal(&system, eta, args.serial)?;
    let pool = thread_pool(args, intervals)?;

    let runs = pool.install(|| run_selected(&system, &cfg, &pcfg, intervals, args.algorithm))?;
    let mut summaries = serde_json::Map::new();
    let mut failed = Vec::new();
    for run in [&runs.classical, &runs.adaptive].into_iter().flatten() {
        log_run(run);
        let name = run.algorithm.as_str();
        report::write_history(&dir.join(format!("history_{name}.csv")), run, &model)?;
        summaries.insert(name.into(), report::run_summary(run, &model));
        if !run.is_converged() {
            failed.push(name);
        }
    }

    let speedup = match (&runs.adaptive, &runs.classical) {
        (Some(ap), Some(cp)) if ap.is_converged() && cp.is_converged() => {
            let seq = sequential_cost(&system, cfg.partition.t_end, &pcfg.fine, eta, &model)?;
            let r = speedup_report(ap, cp, seq, &model)?;
            info!(
                "speedup with coarse: adaptive {:.3}, classical {:.3}",
                r.with_coarse.speedup_ap, r.with_coarse.speedup_cp
            );
            report::speedup_summary(&r)
        }
        _ => serde_json::Value::Null,
    };
    let summary = json!({
        "problem": system.name(),
        "t_end": cfg.partition.t_end,
        "intervals": intervals,
        "eta": eta,
        "eps_g": cfg.schedule.eps_g,
        "balance": cfg.partition.balance,
        "runs": summaries,
        "speedup": speedup,
    });
    report::write_json(&dir.join("summary.json"), &summary)?;

    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::NotConverged(format!("did not converge: {}", failed.join(", "))))
    }
}

fn sweep_row(
    run: &PararealRun,
    cfg: &RunConfig,
    eta: f64,
    seq: Option<f64>,
    model: &CostModel,
) -> Result<SweepRow, CliError> {
    let speedup = |with_coarse: bool| -> Result<Option<f64>, CliError> {
        match (seq, run.is_converged()) {
            (Some(s), true) => Ok(Some(s / aggregate_cost(run, model, with_coarse)?)),
            _ => Ok(None),
        }
    };
    Ok(SweepRow {
        t_end: cfg.partition.t_end,
        intervals: run.intervals(),
        eta,
        algorithm: run.algorithm.as_str().into(),
        speedup_with_g: speedup(true)?,
        speedup_without_g: speedup(false)?,
        status: report::outcome_label(&run.outcome),
    })
}

fn failed_row(cfg: &RunConfig, intervals: usize, eta: f64, algorithm: &str, e: &CliError) -> SweepRow {
    SweepRow {
        t_end: cfg.partition.t_end,
        intervals,
        eta,
        algorithm: algorithm.into(),
        speedup_with_g: None,
        speedup_without_g: None,
        status: format!("failed: {e}"),
    }
}

pub fn sweep(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(&args.config)?;
    cfg.require_charts()?;
    let system = cfg.system()?;
    let model = cfg.cost_model()?;
    let dir = out_dir(args, &cfg)?;
    let intervals_list = cfg.intervals_list();
    let pool = thread_pool(args, intervals_list.iter().copied().max().unwrap_or(1))?;

    let mut rows = Vec::new();
    for eta in cfg.eta_list() {
        let pcfg = cfg.parareal(&system, eta, args.serial)?;
        let seq = match sequential_cost(&system, cfg.partition.t_end, &pcfg.fine, eta, &model) {
            Ok(s) => Some(s),
            Err(e) => {
                warn!("sequential reference at eta = {eta:e} failed: {e}");
                None
            }
        };
        for &n in &intervals_list {
            info!("sweep point N = {n}, eta = {eta:e}");
            let selected = [
                ("classical", args.algorithm.classical()),
                ("adaptive", args.algorithm.adaptive()),
            ];
            for (name, wanted) in selected {
                if !wanted {
                    continue;
                }
                let choice = if name == "classical" {
                    AlgorithmChoice::Classical
                } else {
                    AlgorithmChoice::Adaptive
                };
                let result = pool.install(|| run_selected(&system, &cfg, &pcfg, n, choice));
                let row = match result {
                    Ok(runs) => {
                        let run = runs.classical.or(runs.adaptive).expect("one algorithm selected");
                        log_run(&run);
                        sweep_row(&run, &cfg, eta, seq, &model).unwrap_or_else(|e| failed_row(&cfg, n, eta, name, &e))
                    }
                    Err(e) => {
                        warn!("{name} at N = {n}, eta = {eta:e}: {e}");
                        failed_row(&cfg, n, eta, name, &e)
                    }
                };
                rows.push(row);
            }
        }
    }
    report::write_sweep(&dir.join("sweep.csv"), &rows)?;

    let failed = rows.iter().filter(|r| r.status != "converged").count();
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::NotConverged(format!("{failed} of {} sweep points did not converge", rows.len())))
    }
}

pub fn bounds(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(&args.config)?;
    cfg.require_charts()?;
    let system = cfg.system()?;
    let model = cfg.cost_model()?;
    let dir = out_dir(args, &cfg)?;
    let intervals = cfg.partition.intervals;
    let eps_g = cfg.schedule.eps_g;
    let pcfg = cfg.parareal(&system, cfg.schedule.eta, args.serial)?;
    let pool = thread_pool(args, intervals)?;

    let mode = cfg.mode()?;
    let run = pool.install(|| run_adaptive(&system, cfg.partition.t_end, intervals, mode, &pcfg))?;
    log_run(&run);
    let coarse = SolverPropagator {
        system: &system,
        config: pcfg.coarse.config_for(eps_g),
    };
    let consts = estimate_constants(&system, &run.partition, &coarse, eps_g, cfg.bounds.n_samples, cfg.seed)?
        .inflated(cfg.bounds.inflation);

    let last = run.converged_at().unwrap_or(run.errors.len().saturating_sub(1));
    let rows: Vec<(usize, f64, f64, f64)> = run
        .errors
        .iter()
        .take(last + 1)
        .enumerate()
        .map(|(k, &e)| (k, e, ideal_bound(&consts, k), perturbed_bound(&consts, k)))
        .collect();
    report::write_bounds(&dir.join("bounds.csv"), &rows)?;

    let efficiency = ideal_efficiency(eps_g, model.alpha);
    println!("ideal efficiency (eps_g = {eps_g:e}, alpha = {}): {efficiency:.6}", model.alpha);
    let violations = rows.iter().filter(|r| r.1 > r.3).count();
    if violations > 0 {
        warn!("{violations} rows exceed the perturbed bound");
    }
    report::write_json(
        &dir.join("bounds.json"),
        &json!({
            "status": report::outcome_label(&run.outcome),
            "converged_at": run.converged_at(),
            "tau_tilde": consts.tau_tilde(),
            "mu": consts.mu(),
            "eps_bar": consts.eps_bar(),
            "ideal_efficiency": efficiency,
            "alpha": model.alpha,
            "rows_above_perturbed_bound": violations,
        }),
    )?;

    if run.is_converged() {
        Ok(())
    } else {
        Err(CliError::NotConverged(report::outcome_label(&run.outcome)))
    }
}

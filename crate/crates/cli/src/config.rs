//! Run configuration, read from TOML.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use parareal_core::analysis::{CostMode, CostModel, CostWeights};
use parareal_core::calibration::AccuracyChart;
use parareal_core::integrators::{Method, WarmStartStrategy};
use parareal_core::parareal::{AccuracyMap, PararealConfig, ScheduleMode, SolverSetup};
use parareal_core::problems::by_name;
use parareal_core::{OdeSystem, SolverConfig};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub partition: PartitionSection,
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub solvers: SolversSection,
    #[serde(default)]
    pub cost_model: CostModelSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub bounds: BoundsSection,
    /// Seed for the sampling in constant estimation.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub name: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    pub t_end: f64,
    #[serde(default = "default_intervals")]
    pub intervals: usize,
    /// Interval counts visited by `sweep`; defaults to `[intervals]`.
    #[serde(default)]
    pub sweep_intervals: Vec<usize>,
    #[serde(default)]
    pub balance: bool,
}

fn default_intervals() -> usize {
    10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default = "default_mode")]
    pub mode: String,
    pub eta: f64,
    /// Targets visited by `sweep`; defaults to `[eta]`.
    #[serde(default)]
    pub sweep_eta: Vec<f64>,
    pub eps_g: f64,
    pub k_anticipated: Option<usize>,
    pub k_max: Option<usize>,
    #[serde(default)]
    pub adapt_nu: bool,
}

fn default_mode() -> String {
    "practical".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolversSection {
    #[serde(default = "SolverSection::coarse_default")]
    pub coarse: SolverSection,
    #[serde(default = "SolverSection::fine_default")]
    pub fine: SolverSection,
}

impl Default for SolversSection {
    fn default() -> Self {
        Self {
            coarse: SolverSection::coarse_default(),
            fine: SolverSection::fine_default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub method: String,
    /// Chart file. Without one the accuracy is used directly as tolerance.
    pub chart: Option<PathBuf>,
    /// Tolerances sampled by `calibrate`.
    #[serde(default)]
    pub tolerances: Vec<f64>,
    /// Horizon of the calibration runs; defaults to the run horizon.
    pub chart_t_end: Option<f64>,
    pub warm_start: Option<String>,
    pub h_min: Option<f64>,
    pub h_max: Option<f64>,
    pub newton_max_iters: Option<usize>,
}

impl SolverSection {
    fn coarse_default() -> Self {
        Self::with_method("explicit_rk54")
    }

    fn fine_default() -> Self {
        Self::with_method("radau_iia5")
    }

    fn with_method(method: &str) -> Self {
        Self {
            method: method.into(),
            chart: None,
            tolerances: Vec::new(),
            chart_t_end: None,
            warm_start: None,
            h_min: None,
            h_max: None,
            newton_max_iters: None,
        }
    }

    pub fn method(&self) -> Result<Method, CliError> {
        Method::parse(&self.method).ok_or_else(|| CliError::Config(format!("unknown method `{}`", self.method)))
    }

    /// Base solver configuration; the tolerance is replaced per use.
    pub fn solver_config(&self) -> Result<SolverConfig, CliError> {
        let mut cfg = SolverConfig::new(self.method()?, 1e-6);
        if let Some(s) = &self.warm_start {
            cfg.warm_start = WarmStartStrategy::parse(s)
                .ok_or_else(|| CliError::Config(format!("unknown warm start strategy `{s}`")))?;
        }
        if let Some(h) = self.h_min {
            cfg.h_min = h;
        }
        if let Some(h) = self.h_max {
            cfg.h_max = h;
        }
        if let Some(n) = self.newton_max_iters {
            cfg.newton_max_iters = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModelSection {
    #[serde(default)]
    pub mode: Option<String>,
    pub alpha: Option<f64>,
    pub comm_delay: Option<f64>,
    pub weights: Option<WeightsSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    pub accepted_steps: Option<f64>,
    pub rejected_steps: Option<f64>,
    pub rhs_evals: Option<f64>,
    pub jac_evals: Option<f64>,
    pub lin_solves: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_out() }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default = "default_inflation")]
    pub inflation: f64,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            n_samples: default_samples(),
            inflation: default_inflation(),
        }
    }
}

fn default_samples() -> usize {
    64
}

fn default_inflation() -> f64 {
    2.0
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative chart paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for s in [&mut cfg.solvers.coarse, &mut cfg.solvers.fine] {
            if let Some(c) = &s.chart {
                if c.is_relative() {
                    s.chart = Some(base.join(c));
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.problem.name.as_deref().map_or(true, str::is_empty) {
            return Err(CliError::Config("problem.name is required".into()));
        }
        positive("partition.t_end", self.partition.t_end)?;
        positive("schedule.eta", self.schedule.eta)?;
        positive("schedule.eps_g", self.schedule.eps_g)?;
        if self.intervals_list().iter().any(|&n| n == 0) {
            return Err(CliError::Config("interval counts must be positive".into()));
        }
        for e in self.eta_list() {
            positive("schedule.sweep_eta", e)?;
        }
        self.mode()?;
        self.solvers.coarse.method()?;
        self.solvers.fine.method()?;
        for s in [&self.solvers.coarse, &self.solvers.fine] {
            for t in &s.tolerances {
                positive("tolerances", *t)?;
            }
            if let Some(t) = s.chart_t_end {
                positive("chart_t_end", t)?;
            }
        }
        self.cost_model()?;
        if self.bounds.n_samples < 10 {
            return Err(CliError::Config("bounds.n_samples must be at least 10".into()));
        }
        positive("bounds.inflation", self.bounds.inflation)?;
        Ok(())
    }

    /// Fails unless every chart file named in the config exists.
    pub fn require_charts(&self) -> Result<(), CliError> {
        for s in [&self.solvers.coarse, &self.solvers.fine] {
            if let Some(c) = &s.chart {
                if !c.is_file() {
                    return Err(CliError::Config(format!("chart file {} does not exist", c.display())));
                }
            }
        }
        Ok(())
    }

    pub fn system(&self) -> Result<OdeSystem, CliError> {
        Ok(by_name(self.problem.name.as_deref().unwrap_or(""), &self.problem.params)?)
    }

    pub fn mode(&self) -> Result<ScheduleMode, CliError> {
        ScheduleMode::parse(&self.schedule.mode)
            .ok_or_else(|| CliError::Config(format!("unknown schedule mode `{}`", self.schedule.mode)))
    }

    pub fn intervals_list(&self) -> Vec<usize> {
        if self.partition.sweep_intervals.is_empty() {
            vec![self.partition.intervals]
        } else {
            self.partition.sweep_intervals.clone()
        }
    }

    pub fn eta_list(&self) -> Vec<f64> {
        if self.schedule.sweep_eta.is_empty() {
            vec![self.schedule.eta]
        } else {
            self.schedule.sweep_eta.clone()
        }
    }

    pub fn cost_model(&self) -> Result<CostModel, CliError> {
        let c = &self.cost_model;
        let dim = self.system()?.dim();
        let mut model = match c.mode.as_deref().unwrap_or("measured") {
            "measured" => CostModel::measured(dim),
            "synthetic" => CostModel::synthetic(c.alpha.unwrap_or(1.0)),
            other => return Err(CliError::Config(format!("unknown cost model `{other}`"))),
        };
        if model.mode == CostMode::Measured {
            if let Some(a) = c.alpha {
                model.alpha = a;
            }
        }
        if let Some(d) = c.comm_delay {
            model.comm_delay = d;
        }
        if let Some(w) = &c.weights {
            let d = CostWeights::for_dim(dim);
            model.weights = CostWeights {
                accepted_steps: w.accepted_steps.unwrap_or(d.accepted_steps),
                rejected_steps: w.rejected_steps.unwrap_or(d.rejected_steps),
                rhs_evals: w.rhs_evals.unwrap_or(d.rhs_evals),
                jac_evals: w.jac_evals.unwrap_or(d.jac_evals),
                lin_solves: w.lin_solves.unwrap_or(d.lin_solves),
            };
        }
        model.validate()?;
        Ok(model)
    }

    fn setup(&self, section: &SolverSection, system: &OdeSystem) -> Result<SolverSetup, CliError> {
        let base = section.solver_config()?;
        let accuracy = match &section.chart {
            Some(path) => {
                let chart = AccuracyChart::load(path)?;
                chart.check_provenance(system.name(), base.method)?;
                if chart.check_horizon(self.partition.t_end).is_err() {
                    log::warn!(
                        "chart {} was calibrated for T = {}, run uses T = {}",
                        path.display(),
                        chart.t_end(),
                        self.partition.t_end
                    );
                }
                AccuracyMap::Chart(chart)
            }
            None => AccuracyMap::Direct,
        };
        Ok(SolverSetup::new(base, accuracy))
    }

    /// Parareal configuration for target `eta`.
    pub fn parareal(&self, system: &OdeSystem, eta: f64, serial: bool) -> Result<PararealConfig, CliError> {
        let mut cfg = PararealConfig::new(
            self.setup(&self.solvers.coarse, system)?,
            self.setup(&self.solvers.fine, system)?,
            eta,
            self.schedule.eps_g,
        );
        cfg.k_anticipated = self.schedule.k_anticipated;
        cfg.k_max = self.schedule.k_max;
        cfg.balance = self.partition.balance;
        cfg.adapt_nu = self.schedule.adapt_nu;
        cfg.serial = serial;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}

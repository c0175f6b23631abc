//! Shared fixtures for the benchmarks.

use parareal_core::parareal::{AccuracyMap, PararealConfig, SolverSetup};
use parareal_core::problems::make_brusselator;
use parareal_core::{OdeSystem, SolverConfig};

pub fn brusselator() -> OdeSystem {
    make_brusselator(1.0, 3.0).expect("valid parameters")
}

/// Explicit coarse and Radau fine solvers, tolerances taken as accuracies.
pub fn brusselator_config(eta: f64, eps_g: f64) -> PararealConfig {
    let mut cfg = PararealConfig::new(
        SolverSetup::new(SolverConfig::explicit(eps_g), AccuracyMap::Direct),
        SolverSetup::new(SolverConfig::radau(eta), AccuracyMap::Direct),
        eta,
        eps_g,
    );
    cfg.track_errors = false;
    cfg
}

use log::warn;

use crate::error::Result;
use crate::integrators::{propagate_recording_steps, SolverConfig};
use crate::partition::TimePartition;
use crate::problems::OdeSystem;

/// Step-count imbalance (largest uniform-interval count over the mean) below
/// which the density is treated as flat.
pub const FLAT_IMBALANCE: f64 = 1.2;

/// Partition of `[0, t_end]` giving every subinterval the same number of
/// accepted coarse steps.
///
/// Falls back to the uniform partition when the step density is flat or the
/// coarse solve fails.
pub fn balance_partition(
    system: &OdeSystem,
    t_end: f64,
    intervals: usize,
    coarse: &SolverConfig,
) -> Result<TimePartition> {
    let uniform = TimePartition::uniform(t_end, intervals)?;
    if intervals == 1 {
        return Ok(uniform);
    }
    let times = match propagate_recording_steps(system, 0.0, t_end, system.u0(), coarse) {
        Ok((r, times)) if r.is_converged() => times,
        Ok((r, _)) => {
            warn!("load balancing: coarse solve ended with {:?}, using uniform partition", r.status);
            return Ok(uniform);
        }
        Err(e) => {
            warn!("load balancing: {e}, using uniform partition");
            return Ok(uniform);
        }
    };
    if step_imbalance(&times, &uniform) <= FLAT_IMBALANCE {
        return Ok(uniform);
    }

    let total = times.len() as f64;
    let mut boundaries = Vec::with_capacity(intervals + 1);
    boundaries.push(0.0);
    for j in 1..intervals {
        boundaries.push(time_at_count(&times, total * j as f64 / intervals as f64));
    }
    boundaries.push(t_end);
    match TimePartition::new(boundaries) {
        Ok(p) => Ok(p),
        Err(e) => {
            warn!("load balancing produced an invalid partition ({e}), using uniform partition");
            Ok(uniform)
        }
    }
}

/// Accepted steps completed by time `t`, linear inside each step.
fn count_at(times: &[f64], t: f64) -> f64 {
    let i = times.partition_point(|&x| x <= t);
    if i == times.len() {
        return times.len() as f64;
    }
    let lo = if i == 0 { 0.0 } else { times[i - 1] };
    i as f64 + (t - lo) / (times[i] - lo)
}

/// Inverse of [`count_at`].
fn time_at_count(times: &[f64], c: f64) -> f64 {
    let i = (c.floor() as usize).min(times.len() - 1);
    let lo = if i == 0 { 0.0 } else { times[i - 1] };
    lo + (c - i as f64) * (times[i] - lo)
}

/// Largest per-interval step count over the mean count.
fn step_imbalance(times: &[f64], partition: &TimePartition) -> f64 {
    let b = partition.boundaries();
    let counts: Vec<f64> = b
        .windows(2)
        .map(|w| count_at(times, w[1]) - count_at(times, w[0]))
        .collect();
    let mean = times.len() as f64 / partition.intervals() as f64;
    counts.iter().copied().fold(0.0, f64::max) / mean
}

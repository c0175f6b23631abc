use std::collections::BTreeMap;

use super::WarmStartStrategy;

/// Converged Newton iterate of one accepted implicit step: the stage values
/// (stage-major, `stages * dim` entries) of the step `[t, t + h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeIterate {
    pub t: f64,
    pub h: f64,
    pub stages: Vec<f64>,
}

impl NodeIterate {
    /// Whether this iterate describes (nearly) the same step as `[t, t + h]`.
    /// Iterates from a mismatched step are treated as absent.
    fn matches(&self, t: f64, h: f64) -> bool {
        let slack = 0.1 * h.abs();
        (self.t - t).abs() <= slack && (self.h - h).abs() <= slack
    }
}

/// Iterates of one fine propagation, indexed by time node `n`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntervalHistory {
    pub nodes: Vec<NodeIterate>,
}

impl IntervalHistory {
    pub fn get(&self, n: usize) -> Option<&NodeIterate> {
        self.nodes.get(n)
    }

    pub fn push(&mut self, node: NodeIterate) {
        self.nodes.push(node);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Iterates stored by the previous parareal iteration, keyed by interval.
///
/// Each interval owns its entry, so concurrent fine propagations never
/// share mutable state; the coordinator swaps in the new generation
/// between iterations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WarmStartHistory {
    iteration: Option<usize>,
    intervals: BTreeMap<usize, IntervalHistory>,
}

impl WarmStartHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parareal iteration that produced the stored iterates.
    pub fn iteration(&self) -> Option<usize> {
        self.iteration
    }

    pub fn interval(&self, n: usize) -> Option<&IntervalHistory> {
        self.intervals.get(&n)
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Replaces the stored generation with the iterates of `iteration`.
    pub fn replace(&mut self, iteration: usize, intervals: impl IntoIterator<Item = (usize, IntervalHistory)>) {
        self.iteration = Some(iteration);
        self.intervals = intervals.into_iter().collect();
    }

    pub fn insert(&mut self, iteration: usize, interval: usize, history: IntervalHistory) {
        if self.iteration != Some(iteration) {
            self.intervals.clear();
            self.iteration = Some(iteration);
        }
        self.intervals.insert(interval, history);
    }
}

/// Starting guess for the Newton iterations of step `node` of the current
/// propagation at parareal iteration `iteration`.
///
/// `previous` holds this interval's iterates from iteration `k − 1` and
/// `current` those already converged in this propagation. `fallback` is the
/// guess derived from the previous time node. Missing iterates degrade
/// dynamics-corrected to previous-iteration and previous-iteration to the
/// fallback.
pub fn newton_initial_guess(
    strategy: WarmStartStrategy,
    previous: Option<&IntervalHistory>,
    current: &IntervalHistory,
    node: usize,
    iteration: usize,
    t: f64,
    h: f64,
    fallback: &[f64],
) -> Vec<f64> {
    if iteration == 0 || strategy == WarmStartStrategy::PreviousTime {
        return fallback.to_vec();
    }
    let Some(previous) = previous else {
        return fallback.to_vec();
    };
    let Some(same_node) = previous.get(node).filter(|p| p.matches(t, h)) else {
        return fallback.to_vec();
    };
    if strategy == WarmStartStrategy::DynamicsCorrected && node > 0 {
        if let (Some(cur_prev), Some(old_prev)) = (current.get(node - 1), previous.get(node - 1)) {
            if cur_prev.stages.len() == same_node.stages.len()
                && old_prev.stages.len() == same_node.stages.len()
            {
                return same_node
                    .stages
                    .iter()
                    .zip(cur_prev.stages.iter().zip(&old_prev.stages))
                    .map(|(s, (c, o))| s + (c - o))
                    .collect();
            }
        }
    }
    same_node.stages.clone()
}

use crate::error::{invalid, Result};

/// Boundaries `0 = T_0 < T_1 < ... < T_N = T` of the time decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct TimePartition {
    boundaries: Vec<f64>,
}

impl TimePartition {
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(invalid("partition", "need at least two boundaries"));
        }
        if boundaries[0] != 0.0 {
            return Err(invalid("partition", "first boundary must be 0"));
        }
        if boundaries.iter().any(|b| !b.is_finite()) {
            return Err(invalid("partition", "boundaries must be finite"));
        }
        if boundaries.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("partition", "boundaries must increase strictly"));
        }
        Ok(Self { boundaries })
    }

    pub fn uniform(t_end: f64, intervals: usize) -> Result<Self> {
        if intervals == 0 {
            return Err(invalid("intervals", "must be at least 1"));
        }
        if !(t_end > 0.0) {
            return Err(invalid("T", "must be positive"));
        }
        let mut b: Vec<f64> = (0..=intervals)
            .map(|i| t_end * i as f64 / intervals as f64)
            .collect();
        b[intervals] = t_end;
        Self::new(b)
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Number of subintervals.
    pub fn intervals(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn t_end(&self) -> f64 {
        *self.boundaries.last().unwrap()
    }

    pub fn start(&self, n: usize) -> f64 {
        self.boundaries[n]
    }

    pub fn width(&self, n: usize) -> f64 {
        self.boundaries[n + 1] - self.boundaries[n]
    }

    pub fn max_width(&self) -> f64 {
        (0..self.intervals()).map(|n| self.width(n)).fold(0.0, f64::max)
    }
}

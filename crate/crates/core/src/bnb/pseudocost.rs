//! Per-variable running averages of per-unit objective gains.

use super::BranchDirection;

/// Floor applied to each side of the product score.
pub const SCORE_EPS: f64 = 1e-6;
/// Observations per side before a variable counts as reliable.
pub const RELIABILITY: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct PseudocostTable {
    up_sum: Vec<f64>,
    up_count: Vec<usize>,
    down_sum: Vec<f64>,
    down_count: Vec<usize>,
}

impl PseudocostTable {
    pub fn new(num_vars: usize) -> Self {
        Self {
            up_sum: vec![0.0; num_vars],
            up_count: vec![0; num_vars],
            down_sum: vec![0.0; num_vars],
            down_count: vec![0; num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.up_sum.len()
    }

    /// Records one realized gain per unit of bound change.
    pub fn record(&mut self, var: usize, dir: BranchDirection, per_unit_gain: f64) {
        let g = per_unit_gain.max(0.0);
        match dir {
            BranchDirection::Up => {
                self.up_sum[var] += g;
                self.up_count[var] += 1;
            }
            BranchDirection::Down => {
                self.down_sum[var] += g;
                self.down_count[var] += 1;
            }
        }
    }

    pub fn count(&self, var: usize, dir: BranchDirection) -> usize {
        match dir {
            BranchDirection::Up => self.up_count[var],
            BranchDirection::Down => self.down_count[var],
        }
    }

    /// Mean of the variable's own observations, if any.
    pub fn own_mean(&self, var: usize, dir: BranchDirection) -> Option<f64> {
        let (s, c) = match dir {
            BranchDirection::Up => (self.up_sum[var], self.up_count[var]),
            BranchDirection::Down => (self.down_sum[var], self.down_count[var]),
        };
        (c > 0).then(|| s / c as f64)
    }

    /// Mean over every observation on this side; 1.0 before the first one.
    pub fn global_mean(&self, dir: BranchDirection) -> f64 {
        let (s, c): (f64, usize) = match dir {
            BranchDirection::Up => (self.up_sum.iter().sum(), self.up_count.iter().sum()),
            BranchDirection::Down => (self.down_sum.iter().sum(), self.down_count.iter().sum()),
        };
        if c > 0 {
            s / c as f64
        } else {
            1.0
        }
    }

    /// Own mean, else global mean, else 1.0.
    pub fn mean(&self, var: usize, dir: BranchDirection) -> f64 {
        self.own_mean(var, dir)
            .unwrap_or_else(|| self.global_mean(dir))
    }

    pub fn is_reliable(&self, var: usize, eta: usize) -> bool {
        self.up_count[var] >= eta && self.down_count[var] >= eta
    }

    /// `max(psi_down * f, eps) * max(psi_up * (1 - f), eps)`.
    pub fn product_score(&self, var: usize, frac: f64) -> f64 {
        let down = self.mean(var, BranchDirection::Down) * frac;
        let up = self.mean(var, BranchDirection::Up) * (1.0 - frac);
        down.max(SCORE_EPS) * up.max(SCORE_EPS)
    }
}

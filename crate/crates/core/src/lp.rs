//! Bounded-variable primal simplex for `min c·x  s.t.  A x <= b,  l <= x <= u`.
//!
//! Dense revised simplex: the basis inverse is kept explicitly, updated by
//! elementary row operations after each pivot and rebuilt from scratch every
//! [`REFACTOR_INTERVAL`] pivots. Entering and leaving variables are chosen by
//! Bland's rule (lowest index), so the method cannot cycle. Phase 1 minimizes
//! the sum of artificial variables added to rows whose slack would start
//! negative.

use crate::milp::ValidInstance;

pub const FEAS_TOL: f64 = 1e-7;
pub const PIVOT_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const RATIO_TIE: f64 = 1e-12;
pub const REFACTOR_INTERVAL: usize = 50;
pub const DEFAULT_MAX_ITERATIONS: usize = 50_000;

/// `<=` rows stored densely in both row- and column-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct LeRows {
    num_rows: usize,
    num_cols: usize,
    row_major: Vec<f64>,
    col_major: Vec<f64>,
    rhs: Vec<f64>,
}

impl LeRows {
    pub fn new(num_rows: usize, num_cols: usize, dense_rows: Vec<f64>, rhs: Vec<f64>) -> Self {
        assert_eq!(dense_rows.len(), num_rows * num_cols);
        assert_eq!(rhs.len(), num_rows);
        let mut col_major = vec![0.0; num_rows * num_cols];
        for i in 0..num_rows {
            for j in 0..num_cols {
                col_major[j * num_rows + i] = dense_rows[i * num_cols + j];
            }
        }
        Self {
            num_rows,
            num_cols,
            row_major: dense_rows,
            col_major,
            rhs,
        }
    }

    pub fn from_instance(inst: &ValidInstance) -> Self {
        let (m, n) = (inst.num_cons, inst.num_vars);
        let mut dense = vec![0.0; m * n];
        for e in &inst.constraint_matrix {
            dense[e.row * n + e.col] = e.value;
        }
        Self::new(m, n, dense, inst.rhs.clone())
    }

    pub fn empty(num_cols: usize) -> Self {
        Self::new(0, num_cols, Vec::new(), Vec::new())
    }

    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.row_major[i * self.num_cols..(i + 1) * self.num_cols]
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.col_major[j * self.num_rows..(j + 1) * self.num_rows]
    }

    /// Largest row violation `max(0, a_i·x - b_i)`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        (0..self.num_rows)
            .map(|i| {
                let lhs: f64 = self.row(i).iter().zip(x).map(|(a, v)| a * v).sum();
                (lhs - self.rhs[i]).max(0.0)
            })
            .fold(0.0, f64::max)
    }
}

/// One LP relaxation: shared rows and objective, node-local bounds.
#[derive(Debug, Clone, Copy)]
pub struct LpProblem<'a> {
    pub objective: &'a [f64],
    pub rows: &'a LeRows,
    pub lower: &'a [f64],
    pub upper: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LpLimits {
    pub max_iterations: usize,
}

impl Default for LpLimits {
    fn default() -> Self {
        Self {
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisStatus {
    Basic,
    AtLower,
    AtUpper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    pub objective_value: f64,
    pub solution: Vec<f64>,
    pub basis: Vec<BasisStatus>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LpError {
    #[error("INVALID_LP: {0}")]
    InvalidProblem(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Nonbasic free variable resting at zero.
    Free,
}

enum Step {
    Optimal,
    Unbounded,
    Limit,
    Singular,
}

struct Simplex<'a> {
    rows: &'a LeRows,
    m: usize,
    n: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    since_refactor: usize,
    iterations: usize,
    max_iterations: usize,
    // scratch
    y: Vec<f64>,
    w: Vec<f64>,
}

impl<'a> Simplex<'a> {
    fn total(&self) -> usize {
        self.n + 2 * self.m
    }

    fn is_slack(&self, j: usize) -> bool {
        j >= self.n && j < self.n + self.m
    }

    /// `y · a_j` for any column.
    fn dot_column(&self, y: &[f64], j: usize) -> f64 {
        if j < self.n {
            self.rows.column(j).iter().zip(y).map(|(a, v)| a * v).sum()
        } else if self.is_slack(j) {
            y[j - self.n]
        } else {
            -y[j - self.n - self.m]
        }
    }

    /// Writes `B^{-1} a_j` into `self.w`.
    fn ftran(&mut self, j: usize) {
        let m = self.m;
        if j < self.n {
            let col = self.rows.column(j);
            for i in 0..m {
                let row = &self.binv[i * m..(i + 1) * m];
                self.w[i] = row.iter().zip(col).map(|(b, a)| b * a).sum();
            }
        } else {
            let (k, sign) = if self.is_slack(j) {
                (j - self.n, 1.0)
            } else {
                (j - self.n - self.m, -1.0)
            };
            for i in 0..m {
                self.w[i] = sign * self.binv[i * m + k];
            }
        }
    }

    fn compute_duals(&mut self, cost: &[f64]) {
        let m = self.m;
        self.y.iter_mut().for_each(|v| *v = 0.0);
        for (pos, &var) in self.basis.iter().enumerate() {
            let c = cost[var];
            if c != 0.0 {
                let row = &self.binv[pos * m..(pos + 1) * m];
                for (yk, b) in self.y.iter_mut().zip(row) {
                    *yk += c * b;
                }
            }
        }
    }

    /// Rebuilds the basis inverse and basic values from scratch.
    fn refactor(&mut self) -> bool {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (pos, &var) in self.basis.iter().enumerate() {
            if var < self.n {
                for (i, v) in self.rows.column(var).iter().enumerate() {
                    a[i * m + pos] = *v;
                }
            } else if self.is_slack(var) {
                a[(var - self.n) * m + pos] = 1.0;
            } else {
                a[(var - self.n - self.m) * m + pos] = -1.0;
            }
        }
        let Some(inv) = invert(&mut a, m) else {
            return false;
        };
        self.binv = inv;
        self.since_refactor = 0;
        self.recompute_basic_values();
        true
    }

    fn recompute_basic_values(&mut self) {
        let m = self.m;
        let mut r: Vec<f64> = self.rows.rhs.clone();
        for j in 0..self.total() {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            let v = self.x[j];
            if v == 0.0 {
                continue;
            }
            if j < self.n {
                for (ri, a) in r.iter_mut().zip(self.rows.column(j)) {
                    *ri -= a * v;
                }
            } else if self.is_slack(j) {
                r[j - self.n] -= v;
            } else {
                r[j - self.n - self.m] += v;
            }
        }
        for pos in 0..m {
            let row = &self.binv[pos * m..(pos + 1) * m];
            self.x[self.basis[pos]] = row.iter().zip(&r).map(|(b, v)| b * v).sum();
        }
    }

    fn run(&mut self, cost: &[f64]) -> Step {
        let m = self.m;
        loop {
            if self.iterations >= self.max_iterations {
                return Step::Limit;
            }
            self.compute_duals(cost);

            // Bland: first eligible nonbasic variable.
            let mut entering = None;
            for j in 0..self.total() {
                let st = self.state[j];
                if matches!(st, VarState::Basic(_)) || self.upper[j] - self.lower[j] <= 0.0 {
                    continue;
                }
                let d = cost[j] - self.dot_column(&self.y, j);
                let dir = match st {
                    VarState::AtLower if d < -DUAL_TOL => 1.0,
                    VarState::AtUpper if d > DUAL_TOL => -1.0,
                    VarState::Free if d.abs() > DUAL_TOL => -d.signum(),
                    _ => continue,
                };
                entering = Some((j, dir));
                break;
            }
            let Some((q, dir)) = entering else {
                return Step::Optimal;
            };
            self.iterations += 1;
            self.ftran(q);

            let mut best_t = f64::INFINITY;
            let mut leave: Option<(usize, bool)> = None; // (basis position, hits lower)
            for pos in 0..m {
                let delta = -dir * self.w[pos];
                if delta.abs() <= PIVOT_TOL {
                    continue;
                }
                let var = self.basis[pos];
                let (t, to_lower) = if delta < 0.0 {
                    if self.lower[var] == f64::NEG_INFINITY {
                        continue;
                    }
                    (((self.x[var] - self.lower[var]) / -delta).max(0.0), true)
                } else {
                    if self.upper[var] == f64::INFINITY {
                        continue;
                    }
                    (((self.upper[var] - self.x[var]) / delta).max(0.0), false)
                };
                let better = match leave {
                    None => true,
                    Some((bp, _)) => {
                        t < best_t - RATIO_TIE || (t <= best_t + RATIO_TIE && var < self.basis[bp])
                    }
                };
                if better {
                    best_t = t;
                    leave = Some((pos, to_lower));
                }
            }
            let flip = self.upper[q] - self.lower[q];
            if leave.is_none() && !flip.is_finite() {
                return Step::Unbounded;
            }
            if flip.is_finite() && flip <= best_t {
                // Bound flip: the entering variable reaches its other bound first.
                for pos in 0..m {
                    let var = self.basis[pos];
                    self.x[var] -= dir * self.w[pos] * flip;
                }
                if dir > 0.0 {
                    self.x[q] = self.upper[q];
                    self.state[q] = VarState::AtUpper;
                } else {
                    self.x[q] = self.lower[q];
                    self.state[q] = VarState::AtLower;
                }
                continue;
            }
            let (r, to_lower) = leave.expect("blocking row");
            let t = best_t;
            for pos in 0..m {
                let var = self.basis[pos];
                self.x[var] -= dir * self.w[pos] * t;
            }
            self.x[q] += dir * t;
            let out = self.basis[r];
            if to_lower {
                self.x[out] = self.lower[out];
                self.state[out] = VarState::AtLower;
            } else {
                self.x[out] = self.upper[out];
                self.state[out] = VarState::AtUpper;
            }
            self.basis[r] = q;
            self.state[q] = VarState::Basic(r);

            let piv = self.w[r];
            {
                let (before, rest) = self.binv.split_at_mut(r * m);
                let (prow, after) = rest.split_at_mut(m);
                prow.iter_mut().for_each(|v| *v /= piv);
                for (i, row) in before.chunks_mut(m).chain(after.chunks_mut(m)).enumerate() {
                    let idx = if i < r { i } else { i + 1 };
                    let f = self.w[idx];
                    if f != 0.0 {
                        for (v, p) in row.iter_mut().zip(prow.iter()) {
                            *v -= f * p;
                        }
                    }
                }
            }
            self.since_refactor += 1;
            if self.since_refactor >= REFACTOR_INTERVAL && !self.refactor() {
                return Step::Singular;
            }
        }
    }
}

/// Gauss-Jordan inverse with partial pivoting; `None` when singular.
fn invert(a: &mut [f64], m: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; m * m];
    for i in 0..m {
        inv[i * m + i] = 1.0;
    }
    for col in 0..m {
        let piv =
            (col..m).max_by(|&x, &y| a[x * m + col].abs().total_cmp(&a[y * m + col].abs()))?;
        if a[piv * m + col].abs() < 1e-12 {
            return None;
        }
        if piv != col {
            for k in 0..m {
                a.swap(piv * m + k, col * m + k);
                inv.swap(piv * m + k, col * m + k);
            }
        }
        let p = a[col * m + col];
        for k in 0..m {
            a[col * m + k] /= p;
            inv[col * m + k] /= p;
        }
        for i in 0..m {
            if i == col {
                continue;
            }
            let f = a[i * m + col];
            if f != 0.0 {
                for k in 0..m {
                    a[i * m + k] -= f * a[col * m + k];
                    inv[i * m + k] -= f * inv[col * m + k];
                }
            }
        }
    }
    Some(inv)
}

/// Solves one LP relaxation from a cold start.
pub fn solve_lp(p: &LpProblem<'_>, limits: LpLimits) -> Result<LpOutcome, LpError> {
    let n = p.rows.num_cols;
    let m = p.rows.num_rows;
    if p.objective.len() != n || p.lower.len() != n || p.upper.len() != n {
        return Err(LpError::InvalidProblem("dimension mismatch".into()));
    }
    for j in 0..n {
        if p.lower[j].is_nan() || p.upper[j].is_nan() || p.lower[j] > p.upper[j] {
            return Err(LpError::InvalidProblem(format!(
                "crossing bounds on column {j}"
            )));
        }
        if p.lower[j] == f64::INFINITY || p.upper[j] == f64::NEG_INFINITY {
            return Err(LpError::InvalidProblem(format!(
                "infinite bound value on column {j}"
            )));
        }
        if !p.objective[j].is_finite() {
            return Err(LpError::InvalidProblem(format!(
                "non-finite cost on column {j}"
            )));
        }
    }
    if p.rows.rhs.iter().any(|b| !b.is_finite()) {
        return Err(LpError::InvalidProblem("non-finite rhs".into()));
    }

    let total = n + 2 * m;
    let mut lower = vec![0.0; total];
    let mut upper = vec![f64::INFINITY; total];
    lower[..n].copy_from_slice(p.lower);
    upper[..n].copy_from_slice(p.upper);
    let mut x = vec![0.0; total];
    let mut state = vec![VarState::AtLower; total];
    for j in 0..n {
        if p.lower[j].is_finite() {
            x[j] = p.lower[j];
        } else if p.upper[j].is_finite() {
            x[j] = p.upper[j];
            state[j] = VarState::AtUpper;
        } else {
            state[j] = VarState::Free;
        }
    }
    let mut basis = Vec::with_capacity(m);
    let mut binv = vec![0.0; m * m];
    let mut needs_phase1 = false;
    for i in 0..m {
        let activity: f64 = p.rows.row(i).iter().zip(&x[..n]).map(|(a, v)| a * v).sum();
        let slack = p.rows.rhs[i] - activity;
        let (s, a) = (n + i, n + m + i);
        if slack >= 0.0 {
            basis.push(s);
            state[s] = VarState::Basic(i);
            x[s] = slack;
            binv[i * m + i] = 1.0;
            upper[a] = 0.0;
        } else {
            needs_phase1 = true;
            basis.push(a);
            state[a] = VarState::Basic(i);
            x[a] = -slack;
            binv[i * m + i] = -1.0;
        }
    }
    let mut sx = Simplex {
        rows: p.rows,
        m,
        n,
        lower,
        upper,
        x,
        state,
        basis,
        binv,
        since_refactor: 0,
        iterations: 0,
        max_iterations: limits.max_iterations,
        y: vec![0.0; m],
        w: vec![0.0; m],
    };

    let finish = |sx: &Simplex<'_>, status: LpStatus| -> LpOutcome {
        let mut solution: Vec<f64> = sx.x[..n].to_vec();
        for j in 0..n {
            solution[j] = solution[j].clamp(p.lower[j], p.upper[j]);
        }
        let basis = (0..n)
            .map(|j| match sx.state[j] {
                VarState::Basic(_) => BasisStatus::Basic,
                VarState::AtUpper => BasisStatus::AtUpper,
                VarState::AtLower | VarState::Free => BasisStatus::AtLower,
            })
            .collect();
        let objective_value = p.objective.iter().zip(&solution).map(|(c, v)| c * v).sum();
        LpOutcome {
            status,
            objective_value,
            solution,
            basis,
            iterations: sx.iterations,
        }
    };

    if needs_phase1 {
        let mut cost1 = vec![0.0; total];
        for i in 0..m {
            if sx.upper[n + m + i] > 0.0 {
                cost1[n + m + i] = 1.0;
            }
        }
        match sx.run(&cost1) {
            Step::Optimal => {}
            Step::Limit | Step::Singular => return Ok(finish(&sx, LpStatus::IterationLimit)),
            Step::Unbounded => unreachable!("phase 1 objective is bounded below"),
        }
        let infeas: f64 = (0..m).map(|i| sx.x[n + m + i]).sum();
        if infeas > FEAS_TOL {
            return Ok(finish(&sx, LpStatus::Infeasible));
        }
        for i in 0..m {
            sx.upper[n + m + i] = 0.0;
            if !matches!(sx.state[n + m + i], VarState::Basic(_)) {
                sx.x[n + m + i] = 0.0;
            }
        }
    }
    let mut cost2 = vec![0.0; total];
    cost2[..n].copy_from_slice(p.objective);
    let status = match sx.run(&cost2) {
        Step::Optimal => LpStatus::Optimal,
        Step::Unbounded => LpStatus::Unbounded,
        Step::Limit | Step::Singular => LpStatus::IterationLimit,
    };
    Ok(finish(&sx, status))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(m: usize, n: usize, a: &[f64], b: &[f64]) -> LeRows {
        LeRows::new(m, n, a.to_vec(), b.to_vec())
    }

    #[test]
    fn two_variable_hand_solution() {
        let r = rows(1, 2, &[1.0, 1.0], &[1.5]);
        let p = LpProblem {
            objective: &[-1.0, -2.0],
            rows: &r,
            lower: &[0.0, 0.0],
            upper: &[1.0, 1.0],
        };
        let out = solve_lp(&p, LpLimits::default()).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.objective_value + 2.5).abs() < 1e-12);
        assert!((out.solution[0] - 0.5).abs() < 1e-12);
        assert!((out.solution[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bound_only_problem() {
        let r = LeRows::empty(1);
        let p = LpProblem {
            objective: &[1.0],
            rows: &r,
            lower: &[3.0],
            upper: &[5.0],
        };
        let out = solve_lp(&p, LpLimits::default()).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert_eq!(out.objective_value, 3.0);
        assert_eq!(out.basis, vec![BasisStatus::AtLower]);
    }

    #[test]
    fn unbounded_ray() {
        let r = LeRows::empty(1);
        let p = LpProblem {
            objective: &[-1.0],
            rows: &r,
            lower: &[0.0],
            upper: &[f64::INFINITY],
        };
        assert_eq!(
            solve_lp(&p, LpLimits::default()).unwrap().status,
            LpStatus::Unbounded
        );
    }

    #[test]
    fn infeasible_rows() {
        // x1 + x2 <= 1 and -x1 - x2 <= -3
        let r = rows(2, 2, &[1.0, 1.0, -1.0, -1.0], &[1.0, -3.0]);
        let p = LpProblem {
            objective: &[1.0, 1.0],
            rows: &r,
            lower: &[0.0, 0.0],
            upper: &[10.0, 10.0],
        };
        assert_eq!(
            solve_lp(&p, LpLimits::default()).unwrap().status,
            LpStatus::Infeasible
        );
    }

    #[test]
    fn phase_one_then_optimal() {
        // min x1 + x2, x1 + x2 >= 2 (as -x1 - x2 <= -2), x1 <= 1.5
        let r = rows(1, 2, &[-1.0, -1.0], &[-2.0]);
        let p = LpProblem {
            objective: &[1.0, 2.0],
            rows: &r,
            lower: &[0.0, 0.0],
            upper: &[1.5, 10.0],
        };
        let out = solve_lp(&p, LpLimits::default()).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.objective_value - 2.5).abs() < 1e-9);
    }

    #[test]
    fn free_variable() {
        // min x1 - x2, x1 free, -x1 <= 4 (x1 >= -4), x2 in [0, 2]
        let r = rows(1, 2, &[-1.0, 0.0], &[4.0]);
        let p = LpProblem {
            objective: &[1.0, -1.0],
            rows: &r,
            lower: &[f64::NEG_INFINITY, 0.0],
            upper: &[f64::INFINITY, 2.0],
        };
        let out = solve_lp(&p, LpLimits::default()).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.objective_value + 6.0).abs() < 1e-9);
    }

    #[test]
    fn iteration_limit() {
        let r = rows(1, 2, &[1.0, 1.0], &[1.5]);
        let p = LpProblem {
            objective: &[-1.0, -2.0],
            rows: &r,
            lower: &[0.0, 0.0],
            upper: &[1.0, 1.0],
        };
        let out = solve_lp(&p, LpLimits { max_iterations: 0 }).unwrap();
        assert_eq!(out.status, LpStatus::IterationLimit);
    }

    #[test]
    fn crossing_bounds_rejected() {
        let r = LeRows::empty(1);
        let p = LpProblem {
            objective: &[1.0],
            rows: &r,
            lower: &[2.0],
            upper: &[1.0],
        };
        assert!(solve_lp(&p, LpLimits::default()).is_err());
    }
}

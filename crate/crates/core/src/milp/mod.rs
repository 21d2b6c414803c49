//! Mixed-integer linear programs in minimization form.
//!
//! A [`MilpInstance`] is the raw, possibly mixed-sense problem as read from a
//! file or produced by a generator. [`validate_instance`] checks it and turns
//! it into a [`ValidInstance`] whose rows are all `<=`, which is the only form
//! the LP and branch-and-bound layers accept.

mod brute;
mod generate;
mod mps;
mod native;

pub use brute::{brute_force_solve, BruteForceError, BruteForceOutcome};
pub use generate::{generate_instance, permute_columns, Family, GenerateError, GeneratorParams};
pub use mps::{parse_mps, MpsError};
pub use native::{format_real, parse_real, read_native, write_native, NativeError};

use std::collections::HashSet;
use std::fmt;
use std::ops::Deref;

/// Row sense of a linear constraint `a·x (sense) b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

impl RowSense {
    pub fn as_str(self) -> &'static str {
        match self {
            RowSense::Le => "LE",
            RowSense::Ge => "GE",
            RowSense::Eq => "EQ",
        }
    }
}

/// One nonzero of the constraint matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// `min c·x  s.t.  A x (senses) b,  l <= x <= u,  x_j integer for j in I`.
#[derive(Debug, Clone, PartialEq)]
pub struct MilpInstance {
    pub name: String,
    pub num_vars: usize,
    pub num_cons: usize,
    pub objective: Vec<f64>,
    /// Sparse triples, sorted by (row, col).
    pub constraint_matrix: Vec<Entry>,
    pub row_senses: Vec<RowSense>,
    pub rhs: Vec<f64>,
    pub lower_bounds: Vec<f64>,
    pub upper_bounds: Vec<f64>,
    pub is_integer: Vec<bool>,
}

impl MilpInstance {
    /// Empty instance with `num_vars` continuous variables in `[0, +inf)`.
    pub fn new(name: impl Into<String>, num_vars: usize) -> Self {
        Self {
            name: name.into(),
            num_vars,
            num_cons: 0,
            objective: vec![0.0; num_vars],
            constraint_matrix: Vec::new(),
            row_senses: Vec::new(),
            rhs: Vec::new(),
            lower_bounds: vec![0.0; num_vars],
            upper_bounds: vec![f64::INFINITY; num_vars],
            is_integer: vec![false; num_vars],
        }
    }

    /// Appends a row given as `(col, coefficient)` pairs. Zero coefficients are dropped.
    pub fn add_row(&mut self, coeffs: &[(usize, f64)], sense: RowSense, rhs: f64) -> usize {
        let row = self.num_cons;
        let mut sorted: Vec<(usize, f64)> =
            coeffs.iter().copied().filter(|&(_, v)| v != 0.0).collect();
        sorted.sort_by_key(|&(c, _)| c);
        self.constraint_matrix
            .extend(
                sorted
                    .into_iter()
                    .map(|(col, value)| Entry { row, col, value }),
            );
        self.row_senses.push(sense);
        self.rhs.push(rhs);
        self.num_cons += 1;
        row
    }

    pub fn num_integer(&self) -> usize {
        self.is_integer.iter().filter(|&&b| b).count()
    }

    /// Iterates rows as slices into the sorted triple list.
    pub fn rows(&self) -> impl Iterator<Item = (usize, &[Entry])> + '_ {
        let mut start = 0;
        (0..self.num_cons).map(move |r| {
            let mut end = start;
            while end < self.constraint_matrix.len() && self.constraint_matrix[end].row == r {
                end += 1;
            }
            let slice = &self.constraint_matrix[start..end];
            start = end;
            (r, slice)
        })
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    fn sort_matrix(&mut self) {
        self.constraint_matrix
            .sort_by(|a, b| (a.row, a.col).cmp(&(b.row, b.col)));
    }
}

/// Problems found by [`validate_instance`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValidationError {
    #[error("CROSSING_BOUNDS({0})")]
    CrossingBounds(usize),
    #[error("EMPTY_COLUMN({0})")]
    EmptyColumn(usize),
    #[error("INFINITE_OBJECTIVE({0})")]
    InfiniteObjective(usize),
    #[error("INDEX_OUT_OF_RANGE(row {row}, col {col})")]
    IndexOutOfRange { row: usize, col: usize },
    #[error("DUPLICATE_ENTRY(row {row}, col {col})")]
    DuplicateEntry { row: usize, col: usize },
    #[error("NON_FINITE_COEFFICIENT(row {row}, col {col})")]
    NonFiniteCoefficient { row: usize, col: usize },
    #[error("NON_FINITE_RHS({0})")]
    NonFiniteRhs(usize),
    #[error("DIMENSION_MISMATCH({0})")]
    DimensionMismatch(&'static str),
}

/// An instance that passed validation: every row is `<=`, integer bounds are
/// integral, and the invariants of [`MilpInstance`] hold.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidInstance {
    inner: MilpInstance,
}

impl ValidInstance {
    pub fn into_inner(self) -> MilpInstance {
        self.inner
    }
}

impl Deref for ValidInstance {
    type Target = MilpInstance;
    fn deref(&self) -> &MilpInstance {
        &self.inner
    }
}

impl fmt::Display for ValidInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({} vars, {} integer, {} rows)",
            self.name,
            self.num_vars,
            self.num_integer(),
            self.num_cons
        )
    }
}

/// Checks an instance and normalizes every row to `<=` form.
///
/// `GE` rows are negated, `EQ` rows become a pair of opposite `LE` rows.
/// Problems are reported, never silently repaired; the full list is returned.
pub fn validate_instance(inst: &MilpInstance) -> Result<ValidInstance, Vec<ValidationError>> {
    let mut errors = Vec::new();
    let n = inst.num_vars;
    let m = inst.num_cons;
    for (field, len, want) in [
        ("objective", inst.objective.len(), n),
        ("lower_bounds", inst.lower_bounds.len(), n),
        ("upper_bounds", inst.upper_bounds.len(), n),
        ("is_integer", inst.is_integer.len(), n),
        ("row_senses", inst.row_senses.len(), m),
        ("rhs", inst.rhs.len(), m),
    ] {
        if len != want {
            errors.push(ValidationError::DimensionMismatch(field));
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }

    let mut seen = HashSet::new();
    let mut col_nnz = vec![0usize; n];
    for e in &inst.constraint_matrix {
        if e.row >= m || e.col >= n {
            errors.push(ValidationError::IndexOutOfRange {
                row: e.row,
                col: e.col,
            });
            continue;
        }
        if !seen.insert((e.row, e.col)) {
            errors.push(ValidationError::DuplicateEntry {
                row: e.row,
                col: e.col,
            });
        }
        if !e.value.is_finite() {
            errors.push(ValidationError::NonFiniteCoefficient {
                row: e.row,
                col: e.col,
            });
        }
        if e.value != 0.0 {
            col_nnz[e.col] += 1;
        }
    }
    for (r, b) in inst.rhs.iter().enumerate() {
        if !b.is_finite() {
            errors.push(ValidationError::NonFiniteRhs(r));
        }
    }
    for j in 0..n {
        let (mut l, mut u) = (inst.lower_bounds[j], inst.upper_bounds[j]);
        if inst.is_integer[j] {
            l = round_integer_lower(l);
            u = round_integer_upper(u);
        }
        if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
            errors.push(ValidationError::CrossingBounds(j));
        }
        if col_nnz[j] == 0 {
            errors.push(ValidationError::EmptyColumn(j));
        }
        if !inst.objective[j].is_finite() {
            errors.push(ValidationError::InfiniteObjective(j));
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }

    let mut out = MilpInstance {
        name: inst.name.clone(),
        num_vars: n,
        num_cons: 0,
        objective: inst.objective.clone(),
        constraint_matrix: Vec::with_capacity(inst.constraint_matrix.len()),
        row_senses: Vec::new(),
        rhs: Vec::new(),
        lower_bounds: inst.lower_bounds.clone(),
        upper_bounds: inst.upper_bounds.clone(),
        is_integer: inst.is_integer.clone(),
    };
    for j in 0..n {
        if out.is_integer[j] {
            out.lower_bounds[j] = round_integer_lower(out.lower_bounds[j]);
            out.upper_bounds[j] = round_integer_upper(out.upper_bounds[j]);
        }
    }
    let mut sorted = inst.clone();
    sorted.sort_matrix();
    for (r, row) in sorted.rows() {
        let coeffs: Vec<(usize, f64)> = row.iter().map(|e| (e.col, e.value)).collect();
        let neg: Vec<(usize, f64)> = coeffs.iter().map(|&(c, v)| (c, -v)).collect();
        let b = inst.rhs[r];
        match inst.row_senses[r] {
            RowSense::Le => {
                out.add_row(&coeffs, RowSense::Le, b);
            }
            RowSense::Ge => {
                out.add_row(&neg, RowSense::Le, -b);
            }
            RowSense::Eq => {
                out.add_row(&coeffs, RowSense::Le, b);
                out.add_row(&neg, RowSense::Le, -b);
            }
        }
    }
    Ok(ValidInstance { inner: out })
}

fn round_integer_lower(l: f64) -> f64 {
    if l.is_finite() {
        (l - 1e-9).ceil()
    } else {
        l
    }
}

fn round_integer_upper(u: f64) -> f64 {
    if u.is_finite() {
        (u + 1e-9).floor()
    } else {
        u
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_var() -> MilpInstance {
        let mut inst = MilpInstance::new("t", 2);
        inst.objective = vec![1.0, 1.0];
        inst
    }

    #[test]
    fn ge_row_is_negated() {
        let mut inst = two_var();
        inst.add_row(&[(0, 2.0), (1, 3.0)], RowSense::Ge, 4.0);
        let v = validate_instance(&inst).unwrap();
        assert_eq!(v.row_senses, vec![RowSense::Le]);
        assert_eq!(v.rhs, vec![-4.0]);
        let vals: Vec<f64> = v.constraint_matrix.iter().map(|e| e.value).collect();
        assert_eq!(vals, vec![-2.0, -3.0]);
    }

    #[test]
    fn eq_row_splits_into_two() {
        let mut inst = two_var();
        inst.add_row(&[(0, 1.0), (1, 1.0)], RowSense::Eq, 1.0);
        let v = validate_instance(&inst).unwrap();
        assert_eq!(v.num_cons, 2);
        assert_eq!(v.rhs, vec![1.0, -1.0]);
        assert_eq!(v.constraint_matrix[2].value, -1.0);
        assert_eq!(v.constraint_matrix[2].row, 1);
    }

    #[test]
    fn crossing_bounds_reported() {
        let mut inst = two_var();
        inst.add_row(&[(0, 1.0), (1, 1.0)], RowSense::Le, 1.0);
        inst.lower_bounds[0] = 2.0;
        inst.upper_bounds[0] = 1.0;
        let errs = validate_instance(&inst).unwrap_err();
        assert_eq!(errs, vec![ValidationError::CrossingBounds(0)]);
    }

    #[test]
    fn all_problems_listed_together() {
        let mut inst = two_var();
        inst.objective[1] = f64::INFINITY;
        inst.constraint_matrix.push(Entry {
            row: 0,
            col: 0,
            value: 1.0,
        });
        inst.constraint_matrix.push(Entry {
            row: 0,
            col: 0,
            value: 2.0,
        });
        inst.row_senses.push(RowSense::Le);
        inst.rhs.push(1.0);
        inst.num_cons = 1;
        let errs = validate_instance(&inst).unwrap_err();
        assert!(errs.contains(&ValidationError::DuplicateEntry { row: 0, col: 0 }));
        assert!(errs.contains(&ValidationError::EmptyColumn(1)));
        assert!(errs.contains(&ValidationError::InfiniteObjective(1)));
    }

    #[test]
    fn out_of_range_index() {
        let mut inst = two_var();
        inst.add_row(&[(0, 1.0), (1, 1.0)], RowSense::Le, 1.0);
        inst.constraint_matrix.push(Entry {
            row: 0,
            col: 5,
            value: 1.0,
        });
        let errs = validate_instance(&inst).unwrap_err();
        assert!(errs.contains(&ValidationError::IndexOutOfRange { row: 0, col: 5 }));
    }

    #[test]
    fn integer_bounds_rounded_inward() {
        let mut inst = two_var();
        inst.add_row(&[(0, 1.0), (1, 1.0)], RowSense::Le, 1.0);
        inst.is_integer[0] = true;
        inst.lower_bounds[0] = 0.5;
        inst.upper_bounds[0] = 2.7;
        let v = validate_instance(&inst).unwrap();
        assert_eq!((v.lower_bounds[0], v.upper_bounds[0]), (1.0, 2.0));
    }
}

//! Exhaustive integer enumeration, used as an independent check on the
//! branch-and-bound engine.

use super::ValidInstance;
use crate::lp::{solve_lp, LeRows, LpError, LpLimits, LpProblem, LpStatus};

#[derive(Debug, Clone, PartialEq)]
pub enum BruteForceOutcome {
    Optimal {
        value: f64,
        solution: Vec<f64>,
    },
    Infeasible,
    /// Some integer assignment leaves an unbounded continuous remainder.
    Unbounded,
}

impl BruteForceOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            BruteForceOutcome::Optimal { value, .. } => Some(*value),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BruteForceError {
    #[error("LIMIT_EXCEEDED: {count} assignments > limit {limit}")]
    LimitExceeded { count: f64, limit: u64 },
    #[error("UNBOUNDED_INTEGER_DOMAIN({0})")]
    UnboundedIntegerDomain(usize),
    #[error("LP_ITERATION_LIMIT")]
    LpIterationLimit,
    #[error(transparent)]
    Lp(#[from] LpError),
}

const ROW_TOL: f64 = 1e-9;

/// Minimum over every integer assignment of the continuous remainder's LP value.
pub fn brute_force_solve(
    inst: &ValidInstance,
    enum_limit: u64,
) -> Result<BruteForceOutcome, BruteForceError> {
    let ints: Vec<usize> = (0..inst.num_vars).filter(|&j| inst.is_integer[j]).collect();
    let mut count = 1.0f64;
    for &j in &ints {
        let (l, u) = (inst.lower_bounds[j], inst.upper_bounds[j]);
        if !l.is_finite() || !u.is_finite() {
            return Err(BruteForceError::UnboundedIntegerDomain(j));
        }
        count *= u - l + 1.0;
    }
    if count > enum_limit as f64 {
        return Err(BruteForceError::LimitExceeded {
            count,
            limit: enum_limit,
        });
    }
    let rows = LeRows::from_instance(inst);
    let pure_integer = ints.len() == inst.num_vars;
    let mut lower = inst.lower_bounds.clone();
    let mut upper = inst.upper_bounds.clone();
    let mut point: Vec<f64> = inst.lower_bounds.clone();
    for &j in &ints {
        lower[j] = inst.lower_bounds[j];
        upper[j] = lower[j];
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    loop {
        let candidate = if pure_integer {
            for &j in &ints {
                point[j] = lower[j];
            }
            if rows.max_violation(&point) <= ROW_TOL {
                Some((inst.objective_value(&point), point.clone()))
            } else {
                None
            }
        } else {
            let p = LpProblem {
                objective: &inst.objective,
                rows: &rows,
                lower: &lower,
                upper: &upper,
            };
            let out = solve_lp(&p, LpLimits::default())?;
            match out.status {
                LpStatus::Optimal => Some((out.objective_value, out.solution)),
                LpStatus::Infeasible => None,
                LpStatus::Unbounded => return Ok(BruteForceOutcome::Unbounded),
                LpStatus::IterationLimit => return Err(BruteForceError::LpIterationLimit),
            }
        };
        if let Some((value, sol)) = candidate {
            if best.as_ref().map_or(true, |(b, _)| value < *b) {
                best = Some((value, sol));
            }
        }
        // Odometer step over the integer variables.
        let mut k = 0;
        loop {
            if k == ints.len() {
                return Ok(match best {
                    Some((value, solution)) => BruteForceOutcome::Optimal { value, solution },
                    None => BruteForceOutcome::Infeasible,
                });
            }
            let j = ints[k];
            if lower[j] < inst.upper_bounds[j] {
                lower[j] += 1.0;
                upper[j] = lower[j];
                break;
            }
            lower[j] = inst.lower_bounds[j];
            upper[j] = lower[j];
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{validate_instance, MilpInstance, RowSense};

    fn knapsack() -> ValidInstance {
        let mut inst = MilpInstance::new("knap", 2);
        inst.objective = vec![-3.0, -4.0];
        inst.upper_bounds = vec![1.0, 1.0];
        inst.is_integer = vec![true, true];
        inst.add_row(&[(0, 2.0), (1, 3.0)], RowSense::Le, 4.0);
        validate_instance(&inst).unwrap()
    }

    #[test]
    fn knapsack_optimum() {
        // Four assignments: (0,0)=0, (1,0)=-3, (0,1)=-4, (1,1) infeasible (5 > 4).
        match brute_force_solve(&knapsack(), 16).unwrap() {
            BruteForceOutcome::Optimal { value, solution } => {
                assert_eq!(value, -4.0);
                assert_eq!(solution, vec![0.0, 1.0]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_feasible_set() {
        let mut inst = MilpInstance::new("inf", 2);
        inst.upper_bounds = vec![1.0, 1.0];
        inst.is_integer = vec![true, true];
        inst.add_row(&[(0, 1.0), (1, 1.0)], RowSense::Ge, 3.0);
        let v = validate_instance(&inst).unwrap();
        assert_eq!(
            brute_force_solve(&v, 16).unwrap(),
            BruteForceOutcome::Infeasible
        );
    }

    #[test]
    fn limit_exceeded() {
        assert!(matches!(
            brute_force_solve(&knapsack(), 3),
            Err(BruteForceError::LimitExceeded { .. })
        ));
    }

    #[test]
    fn pure_lp_matches_simplex() {
        let mut inst = MilpInstance::new("lp", 2);
        inst.objective = vec![-1.0, -2.0];
        inst.upper_bounds = vec![1.0, 1.0];
        inst.add_row(&[(0, 1.0), (1, 1.0)], RowSense::Le, 1.5);
        let v = validate_instance(&inst).unwrap();
        let rows = LeRows::from_instance(&v);
        let lp = solve_lp(
            &LpProblem {
                objective: &v.objective,
                rows: &rows,
                lower: &v.lower_bounds,
                upper: &v.upper_bounds,
            },
            LpLimits::default(),
        )
        .unwrap();
        assert_eq!(
            brute_force_solve(&v, 1).unwrap().value(),
            Some(lp.objective_value)
        );
    }

    #[test]
    fn mixed_instance() {
        // min -x0 - y, x0 + y <= 2.5, x0 integer in [0, 3], y in [0, 1]
        let mut inst = MilpInstance::new("mix", 2);
        inst.objective = vec![-1.0, -1.0];
        inst.upper_bounds = vec![3.0, 1.0];
        inst.is_integer = vec![true, false];
        inst.add_row(&[(0, 1.0), (1, 1.0)], RowSense::Le, 2.5);
        let v = validate_instance(&inst).unwrap();
        let val = brute_force_solve(&v, 100).unwrap().value().unwrap();
        assert!((val + 2.5).abs() < 1e-9);
    }
}

//! State featurization: candidate matrix, node vector, tree vector.
//!
//! Index meanings are frozen; see `docs/features.md` for the full table.
//! Every entry is sanitized (non-finite values become 0) and clamped to
//! `[-FEATURE_CLAMP, FEATURE_CLAMP]`.

use crate::bnb::pseudocost::RELIABILITY;
use crate::bnb::{BranchDirection, Candidate, ChildSide, PseudocostTable, SearchHistory};
use crate::lp::BasisStatus;
use crate::milp::MilpInstance;

pub const FEATURE_SCHEMA_VERSION: u32 = 1;
pub const CANDIDATE_DIM: usize = 25;
pub const NODE_DIM: usize = 8;
pub const TREE_DIM: usize = 53;
pub const FEATURE_CLAMP: f64 = 5.0;

/// Sizes of the tree-vector groups, in order.
pub const TREE_GROUPS: [(&str, usize); 7] = [
    ("bounds_gap", 6),
    ("tree_shape", 10),
    ("frontier_bounds", 8),
    ("pseudocosts", 12),
    ("branching_history", 9),
    ("lp_stats", 5),
    ("progress", 3),
];

const LOG_NODE_CAP: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("EMPTY_CANDIDATES: branching requested at a node without fractional candidates")]
    EmptyCandidates,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateFeatures {
    pub candidates: Vec<[f64; CANDIDATE_DIM]>,
    pub node: [f64; NODE_DIM],
    pub tree: [f64; TREE_DIM],
    /// `true` marks a padded slot; length is the batch width.
    pub pad_mask: Vec<bool>,
    pub candidate_var_ids: Vec<usize>,
}

impl StateFeatures {
    pub fn num_candidates(&self) -> usize {
        self.candidates.len()
    }

    /// Mask for a batch of width `width >= num_candidates()`.
    pub fn mask_for_width(&self, width: usize) -> Vec<bool> {
        assert!(
            width >= self.candidates.len(),
            "batch width below candidate count"
        );
        (0..width).map(|i| i >= self.candidates.len()).collect()
    }

    /// Candidate rows zero-padded to `width`.
    pub fn padded_candidates(&self, width: usize) -> Vec<[f64; CANDIDATE_DIM]> {
        let mut rows = self.candidates.clone();
        rows.resize(width, [0.0; CANDIDATE_DIM]);
        rows
    }

    /// Candidate rows permuted so that new row `i` is old row `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> StateFeatures {
        StateFeatures {
            candidates: perm.iter().map(|&p| self.candidates[p]).collect(),
            node: self.node,
            tree: self.tree,
            pad_mask: self.pad_mask.clone(),
            candidate_var_ids: perm.iter().map(|&p| self.candidate_var_ids[p]).collect(),
        }
    }

    pub fn all_finite_and_clamped(&self) -> bool {
        let ok = |v: &f64| v.is_finite() && v.abs() <= FEATURE_CLAMP;
        self.candidates.iter().all(|r| r.iter().all(ok))
            && self.node.iter().all(ok)
            && self.tree.iter().all(ok)
    }
}

/// Static per-column statistics of an instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats {
    pub density: Vec<f64>,
    pub mean_row_ratio: Vec<f64>,
    pub max_row_ratio: Vec<f64>,
    pub objective_inf_norm: f64,
    pub is_binary: Vec<bool>,
}

impl ColumnStats {
    pub fn new(inst: &MilpInstance) -> Self {
        let n = inst.num_vars;
        let m = inst.num_cons.max(1) as f64;
        let mut nnz = vec![0usize; n];
        let mut ratio_sum = vec![0.0; n];
        let mut ratio_max = vec![0.0f64; n];
        for (_, row) in inst.rows() {
            let row_max = row.iter().map(|e| e.value.abs()).fold(0.0, f64::max);
            for e in row {
                nnz[e.col] += 1;
                let r = if row_max > 0.0 {
                    e.value.abs() / row_max
                } else {
                    0.0
                };
                ratio_sum[e.col] += r;
                ratio_max[e.col] = ratio_max[e.col].max(r);
            }
        }
        ColumnStats {
            density: nnz.iter().map(|&k| k as f64 / m).collect(),
            mean_row_ratio: (0..n)
                .map(|j| {
                    if nnz[j] > 0 {
                        ratio_sum[j] / nnz[j] as f64
                    } else {
                        0.0
                    }
                })
                .collect(),
            max_row_ratio: ratio_max,
            objective_inf_norm: inst.objective.iter().map(|c| c.abs()).fold(0.0, f64::max),
            is_binary: (0..n)
                .map(|j| {
                    inst.is_integer[j] && inst.lower_bounds[j] == 0.0 && inst.upper_bounds[j] == 1.0
                })
                .collect(),
        }
    }
}

/// The node being branched.
#[derive(Debug, Clone, Copy)]
pub struct NodeView<'a> {
    pub depth: usize,
    pub lp_bound: f64,
    pub solution: &'a [f64],
    pub basis: &'a [BasisStatus],
    pub lower: &'a [f64],
    pub upper: &'a [f64],
    pub child_side: ChildSide,
    pub plunge_depth: usize,
    /// Per variable, how often it was branched on along the root path.
    pub path_branch_counts: &'a [usize],
}

/// Global search state.
#[derive(Debug, Clone, Copy)]
pub struct TreeView<'a> {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub prev_gap: Option<f64>,
    pub root_bound: f64,
    pub explored: usize,
    /// `(depth, bound)` of every open node, including the one being branched.
    pub open: &'a [(usize, f64)],
    pub max_depth: usize,
    pub best_bound_depth: usize,
    pub current_depth: usize,
    pub last_selected_bound: Option<f64>,
    pub decisions: usize,
    pub decision_budget: usize,
    pub tau: f64,
    pub pdi: f64,
    pub pdi_reference: f64,
    pub history: &'a SearchHistory,
    /// Variables branched on along the root path.
    pub path_vars: &'a [usize],
    pub pseudocosts: &'a PseudocostTable,
    pub num_integer: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverSnapshot<'a> {
    pub instance: &'a MilpInstance,
    pub columns: &'a ColumnStats,
    pub node: NodeView<'a>,
    pub candidates: &'a [Candidate],
    pub pseudocosts: &'a PseudocostTable,
    pub tree: TreeView<'a>,
}

/// NaN and infinities become 0, then clamp.
pub fn sanitize(v: f64) -> f64 {
    if v.is_finite() {
        v.clamp(-FEATURE_CLAMP, FEATURE_CLAMP)
    } else {
        0.0
    }
}

fn div_or(num: f64, den: f64, fallback: f64) -> f64 {
    if den.abs() > 1e-12 {
        num / den
    } else {
        fallback
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn log_count(n: usize) -> f64 {
    ((1.0 + n as f64).ln() / (1.0 + LOG_NODE_CAP).ln()).min(1.0)
}

pub fn extract(s: &SolverSnapshot<'_>) -> Result<StateFeatures, FeatureError> {
    if s.candidates.is_empty() {
        return Err(FeatureError::EmptyCandidates);
    }
    let mut candidates = candidate_features(s)?;
    for row in candidates.iter_mut() {
        row.iter_mut().for_each(|v| *v = sanitize(*v));
    }
    let mut node = node_features(s);
    node.iter_mut().for_each(|v| *v = sanitize(*v));
    let mut tree = tree_features(s);
    tree.iter_mut().for_each(|v| *v = sanitize(*v));
    Ok(StateFeatures {
        pad_mask: vec![false; candidates.len()],
        candidate_var_ids: s.candidates.iter().map(|c| c.var).collect(),
        candidates,
        node,
        tree,
    })
}

/// Raw (unsanitized) candidate rows.
pub fn candidate_features(
    s: &SolverSnapshot<'_>,
) -> Result<Vec<[f64; CANDIDATE_DIM]>, FeatureError> {
    let cands = s.candidates;
    if cands.is_empty() {
        return Err(FeatureError::EmptyCandidates);
    }
    let pc = s.pseudocosts;
    let up_global = pc.global_mean(BranchDirection::Up);
    let down_global = pc.global_mean(BranchDirection::Down);
    let products: Vec<f64> = cands
        .iter()
        .map(|c| pc.product_score(c.var, c.frac))
        .collect();
    let up_gain: Vec<f64> = cands
        .iter()
        .map(|c| pc.mean(c.var, BranchDirection::Up) * (1.0 - c.frac))
        .collect();
    let down_gain: Vec<f64> = cands
        .iter()
        .map(|c| pc.mean(c.var, BranchDirection::Down) * c.frac)
        .collect();
    let max_of = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let (max_prod, max_up, max_down) = (max_of(&products), max_of(&up_gain), max_of(&down_gain));

    // Rank 0 is the most fractional candidate; ties by position.
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = cands[a].frac.min(1.0 - cands[a].frac);
        let fb = cands[b].frac.min(1.0 - cands[b].frac);
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut rank = vec![0usize; cands.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }

    let cols = s.columns;
    let node = &s.node;
    let depth = node.depth as f64;
    Ok(cands
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let j = c.var;
            let f = c.frac;
            let x = c.value;
            let (l, u) = (node.lower[j], node.upper[j]);
            let range = u - l;
            let cj = s.instance.objective[j];
            let mut r = [0.0; CANDIDATE_DIM];
            r[0] = f.min(1.0 - f);
            r[1] = f;
            r[2] = 1.0 - f;
            r[3] = div_or(cj, cols.objective_inf_norm, 0.0);
            r[4] = if cj > 0.0 {
                1.0
            } else if cj < 0.0 {
                -1.0
            } else {
                0.0
            };
            r[5] = div_or(pc.mean(j, BranchDirection::Up), up_global, 1.0).min(5.0);
            r[6] = div_or(pc.mean(j, BranchDirection::Down), down_global, 1.0).min(5.0);
            r[7] = div_or(products[i], max_prod, 0.0);
            r[8] = pc.count(j, BranchDirection::Up).min(10) as f64 / 10.0;
            r[9] = pc.count(j, BranchDirection::Down).min(10) as f64 / 10.0;
            r[10] = cols.density[j];
            r[11] = if range.is_finite() {
                range.min(100.0) / 100.0
            } else {
                1.0
            };
            if range.is_finite() && range > 0.0 {
                r[12] = ((x - l) / range).clamp(0.0, 1.0);
                r[13] = ((u - x) / range).clamp(0.0, 1.0);
            } else {
                r[12] = 0.5;
                r[13] = 0.5;
            }
            r[14] = f64::from(u8::from(x.floor() == l));
            r[15] = f64::from(u8::from(x.ceil() == u));
            r[16] = cols.mean_row_ratio[j];
            r[17] = cols.max_row_ratio[j];
            r[18] = node.path_branch_counts[j] as f64 / (depth + 1.0);
            r[19] = (x - x.round()).abs();
            r[20] = div_or(up_gain[i], max_up, 0.0);
            r[21] = div_or(down_gain[i], max_down, 0.0);
            r[22] = f64::from(u8::from(cols.is_binary[j]));
            r[23] = f64::from(u8::from(node.basis.get(j) == Some(&BasisStatus::Basic)));
            r[24] = if cands.len() > 1 {
                rank[i] as f64 / (cands.len() - 1) as f64
            } else {
                0.0
            };
            r
        })
        .collect())
}

/// Raw node vector.
pub fn node_features(s: &SolverSnapshot<'_>) -> [f64; NODE_DIM] {
    let n = &s.node;
    let t = &s.tree;
    let cands = s.candidates;
    let num_int = s.instance.num_integer();
    let fixed = (0..s.instance.num_vars)
        .filter(|&j| s.instance.is_integer[j] && n.lower[j] == n.upper[j])
        .count();
    let mut v = [0.0; NODE_DIM];
    v[0] = n.depth as f64 / (1.0 + t.max_depth as f64);
    v[1] = ((n.lp_bound - t.dual) / (t.primal - t.dual + 1e-10)).clamp(0.0, 1.0);
    v[2] = div_or(cands.len() as f64, num_int as f64, 0.0);
    v[3] = ((n.lp_bound - t.root_bound) / (t.root_bound.abs() + 1.0)).tanh();
    v[4] = match n.child_side {
        ChildSide::Left => 0.0,
        ChildSide::Right => 1.0,
        ChildSide::Root => 0.5,
    };
    v[5] = n.plunge_depth as f64 / (n.depth as f64 + 1.0);
    v[6] = div_or(fixed as f64, num_int as f64, 0.0);
    v[7] = if cands.is_empty() {
        0.0
    } else {
        cands.iter().map(|c| c.frac.min(1.0 - c.frac)).sum::<f64>() / cands.len() as f64
    };
    v
}

/// Raw tree vector.
pub fn tree_features(s: &SolverSnapshot<'_>) -> [f64; TREE_DIM] {
    let t = &s.tree;
    let h = t.history;
    let mut v = Vec::with_capacity(TREE_DIM);
    let max_depth = t.max_depth as f64;
    let per_depth = |d: f64| div_or(d, max_depth, 0.0);

    // A. bounds and gap
    v.push(t.gap);
    v.push((t.primal / (1.0 + t.primal.abs())).tanh());
    v.push((t.dual / (1.0 + t.dual.abs())).tanh());
    v.push(t.prev_gap.map_or(0.0, |p| t.gap - p));
    v.push(per_depth(t.best_bound_depth as f64));
    v.push(t.tau);

    // B. tree shape
    let open = t.open.len();
    let depths: Vec<f64> = t.open.iter().map(|&(d, _)| d as f64).collect();
    let (depth_mean, depth_std) = mean_std(&depths);
    let explored = t.explored.max(1) as f64;
    let near_dual = t
        .open
        .iter()
        .filter(|&&(_, b)| b - t.dual <= 0.01 * t.dual.abs().max(1.0))
        .count();
    v.push(log_count(t.explored));
    v.push(div_or(open as f64, (open + t.explored) as f64, 0.0));
    v.push((max_depth / 64.0).min(1.0));
    v.push(per_depth(depth_mean));
    v.push(per_depth(depth_std));
    v.push(h.pruned_bound as f64 / explored);
    v.push(h.pruned_infeasible as f64 / explored);
    v.push(h.fathomed_integral as f64 / explored);
    v.push(div_or(near_dual as f64, open as f64, 0.0));
    v.push(per_depth(t.current_depth as f64));

    // C. frontier bounds
    if open == 0 {
        v.extend([0.5; 8]);
    } else {
        let range = t.primal - t.dual;
        let scaled = range.is_finite() && range > 1e-10;
        let norm = |b: f64| {
            if scaled {
                ((b - t.dual) / range).clamp(0.0, 1.0)
            } else {
                ((b - t.dual) / (t.dual.abs() + 1.0)).tanh()
            }
        };
        let mut bounds: Vec<f64> = t.open.iter().map(|&(_, b)| norm(b)).collect();
        bounds.sort_by(f64::total_cmp);
        let (mean, std) = mean_std(&bounds);
        v.push(bounds[0]);
        v.push(mean);
        v.push(bounds[bounds.len() - 1]);
        v.push(std);
        v.push(quantile(&bounds, 0.25));
        v.push(quantile(&bounds, 0.75));
        v.push(t.last_selected_bound.map_or(0.0, norm));
        v.push(log_count(open));
    }

    // D. pseudocost aggregates over integer variables
    let pc = t.pseudocosts;
    let ints: Vec<usize> = (0..s.instance.num_vars)
        .filter(|&j| s.instance.is_integer[j])
        .collect();
    for dir in [BranchDirection::Up, BranchDirection::Down] {
        let means: Vec<f64> = ints.iter().filter_map(|&j| pc.own_mean(j, dir)).collect();
        let (m, sd) = mean_std(&means);
        v.push(m);
        v.push(sd);
        v.push(means.iter().copied().fold(0.0, f64::max));
    }
    let n_int = ints.len().max(1) as f64;
    let count_if =
        |pred: &dyn Fn(usize) -> bool| ints.iter().filter(|&&j| pred(j)).count() as f64 / n_int;
    v.push(count_if(&|j| {
        pc.count(j, BranchDirection::Up) >= RELIABILITY
    }));
    v.push(count_if(&|j| {
        pc.count(j, BranchDirection::Down) >= RELIABILITY
    }));
    v.push(
        ints.iter()
            .map(|&j| {
                pc.count(j, BranchDirection::Up)
                    .min(pc.count(j, BranchDirection::Down))
                    .min(10) as f64
                    / 10.0
            })
            .sum::<f64>()
            / n_int,
    );
    v.push(count_if(&|j| {
        pc.count(j, BranchDirection::Up) == 0 && pc.count(j, BranchDirection::Down) == 0
    }));
    let scores: Vec<f64> = s
        .candidates
        .iter()
        .map(|c| pc.product_score(c.var, c.frac))
        .collect();
    v.push(mean_std(&scores).0);
    v.push(scores.iter().copied().fold(0.0, f64::max));

    // E. branching history
    let decisions = t.decisions as f64;
    for b in h.depth_buckets {
        v.push(div_or(b as f64, decisions, 0.0));
    }
    let (gain_mean, gain_std) = if h.gain_count > 0 {
        let n = h.gain_count as f64;
        let m = h.gain_sum / n;
        (m, (h.gain_sumsq / n - m * m).max(0.0).sqrt())
    } else {
        (0.0, 0.0)
    };
    v.push(gain_mean.tanh());
    v.push(gain_std.tanh());
    v.push(div_or(h.both_children_fathomed as f64, decisions, 0.0));
    let repeat = if t.path_vars.is_empty() {
        0.0
    } else {
        let mut distinct = t.path_vars.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        (t.path_vars.len() - distinct.len()) as f64 / t.path_vars.len() as f64
    };
    v.push(repeat);
    let total: usize = h.branched_var_counts.iter().sum();
    let entropy = if total > 0 && ints.len() > 1 {
        let e: f64 = h
            .branched_var_counts
            .iter()
            .filter(|&&k| k > 0)
            .map(|&k| {
                let p = k as f64 / total as f64;
                -p * p.ln()
            })
            .sum();
        e / (ints.len() as f64).ln()
    } else {
        0.0
    };
    v.push(entropy);
    v.push(h.last_gain_log_ratio.tanh());

    // F. LP statistics
    v.push(div_or(h.node_lp_iterations as f64, h.node_lps as f64, 0.0) / 1000.0);
    v.push(h.last_node_iterations as f64 / 1000.0);
    v.push(div_or(h.child_infeasible as f64, h.child_lps as f64, 0.0));
    v.push(div_or(h.bound_change_sum, h.bound_change_count as f64, 0.0).tanh());
    v.push(div_or(
        h.iteration_limit_hits as f64,
        h.node_lps as f64,
        0.0,
    ));

    // G. progress
    v.push(div_or(decisions, t.decision_budget as f64, 0.0));
    v.push((t.pdi / (t.pdi_reference + 1e-10)).tanh());
    v.push(f64::from(u8::from(t.primal.is_finite())));

    debug_assert_eq!(v.len(), TREE_DIM);
    let mut out = [0.0; TREE_DIM];
    out.copy_from_slice(&v);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_sum_to_tree_dim() {
        assert_eq!(TREE_GROUPS.iter().map(|g| g.1).sum::<usize>(), TREE_DIM);
    }

    #[test]
    fn sanitize_rules() {
        assert_eq!(sanitize(f64::NAN), 0.0);
        assert_eq!(sanitize(f64::INFINITY), 0.0);
        assert_eq!(sanitize(7.0), 5.0);
        assert_eq!(sanitize(-0.25), -0.25);
    }

    #[test]
    fn log_count_caps() {
        assert_eq!(log_count(1_000_000), 1.0);
        assert_eq!(log_count(0), 0.0);
    }
}

//! Friedman omnibus and one-sided Wilcoxon signed-rank tests.

use super::EvalError;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FriedmanResult {
    pub chi2: f64,
    pub df: usize,
    pub p: f64,
}

impl FriedmanResult {
    /// `22.215 (4), 1.82e-4` style.
    pub fn formatted(&self) -> String {
        format!("{:.3} ({}), {}", self.chi2, self.df, format_p(self.p))
    }
}

/// Three significant digits in scientific notation below 0.01, else fixed.
pub fn format_p(p: f64) -> String {
    if p < 0.01 {
        format!("{p:.2e}")
    } else {
        format!("{p:.4}")
    }
}

/// Average ranks (1-based) of `values`, ascending; ties share their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        idx[i..=j].iter().for_each(|&k| ranks[k] = r);
        i = j + 1;
    }
    ranks
}

/// `ranks` is `n` instances by `k` policies, each row already ranked.
pub fn friedman(ranks: &[Vec<f64>]) -> Result<FriedmanResult, EvalError> {
    let n = ranks.len();
    let k = ranks.first().map_or(0, Vec::len);
    if n < 2 || k < 2 || ranks.iter().any(|r| r.len() != k) {
        return Err(EvalError::Degenerate(format!(
            "friedman needs n >= 2, k >= 2 (n={n}, k={k})"
        )));
    }
    let (nf, kf) = (n as f64, k as f64);
    let sums: Vec<f64> = (0..k).map(|j| ranks.iter().map(|r| r[j]).sum()).collect();
    let chi2 = 12.0 / (nf * kf * (kf + 1.0)) * sums.iter().map(|r| r * r).sum::<f64>()
        - 3.0 * nf * (kf + 1.0);
    let chi2 = chi2.max(0.0);
    let dist = ChiSquared::new(kf - 1.0).map_err(|e| EvalError::Degenerate(e.to_string()))?;
    Ok(FriedmanResult {
        chi2,
        df: k - 1,
        p: dist.sf(chi2),
    })
}

/// Mean rank per policy column.
pub fn mean_ranks(ranks: &[Vec<f64>]) -> Vec<f64> {
    let k = ranks.first().map_or(0, Vec::len);
    (0..k)
        .map(|j| ranks.iter().map(|r| r[j]).sum::<f64>() / ranks.len() as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences.
    pub w_plus: f64,
    pub n: usize,
    pub p: f64,
    pub exact: bool,
}

pub const WILCOXON_MIN_PAIRS: usize = 5;
pub const WILCOXON_EXACT_MAX: usize = 12;

/// One-sided test that the differences tend to be negative.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<WilcoxonResult, EvalError> {
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nz.len();
    if n < WILCOXON_MIN_PAIRS {
        return Err(EvalError::TooFewPairs(n));
    }
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = nz
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum::<f64>()
        + 0.0;
    if n <= WILCOXON_EXACT_MAX {
        Ok(WilcoxonResult {
            w_plus,
            n,
            p: wilcoxon_exact_less(&ranks, w_plus),
            exact: true,
        })
    } else {
        Ok(WilcoxonResult {
            w_plus,
            n,
            p: wilcoxon_normal_less(&ranks, w_plus),
            exact: false,
        })
    }
}

/// `P(W+ <= w)` by enumerating every sign pattern.
pub fn wilcoxon_exact_less(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len();
    let total = 1u64 << n;
    let hits = (0..total)
        .filter(|mask| {
            let w: f64 = (0..n)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| ranks[i])
                .sum();
            w <= w_plus + 1e-9
        })
        .count();
    hits as f64 / total as f64
}

/// Normal approximation with tie and continuity correction.
pub fn wilcoxon_normal_less(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
        let t = j as f64;
        tie += t * t * t - t;
        i += j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = (w_plus - mean + 0.5) / var.sqrt();
    Normal::new(0.0, 1.0).expect("standard normal").cdf(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn friedman_perfect_ordering() {
        let ranks = vec![vec![1.0, 2.0, 3.0]; 4];
        let r = friedman(&ranks).unwrap();
        assert!((r.chi2 - 8.0).abs() < 1e-12);
        assert_eq!(r.df, 2);
        assert!((r.p - (-4f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn friedman_all_ties_is_zero() {
        let r = friedman(&vec![vec![2.0, 2.0, 2.0]; 5]).unwrap();
        assert_eq!(r.chi2, 0.0);
        assert!(friedman(&[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn friedman_format() {
        let r = FriedmanResult {
            chi2: 22.215,
            df: 4,
            p: 1.82e-4,
        };
        assert_eq!(r.formatted(), "22.215 (4), 1.82e-4");
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
    }

    #[test]
    fn wilcoxon_all_negative() {
        let r = wilcoxon_signed_rank(&[-1.0, -2.0, -3.0, -4.0, -5.0]).unwrap();
        assert_eq!(r.p, 0.03125);
        assert!(r.exact);
        assert_eq!(r.w_plus, 0.0);
    }

    #[test]
    fn wilcoxon_symmetric_and_degenerate() {
        let r = wilcoxon_signed_rank(&[1.0, -1.0, 2.0, -2.0, 3.0, -3.0]).unwrap();
        assert!(r.p > 0.3);
        assert!(matches!(
            wilcoxon_signed_rank(&[0.0; 8]),
            Err(EvalError::TooFewPairs(0))
        ));
        assert!(matches!(
            wilcoxon_signed_rank(&[1.0, -1.0]),
            Err(EvalError::TooFewPairs(2))
        ));
    }
}

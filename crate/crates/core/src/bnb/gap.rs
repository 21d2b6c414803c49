/// Relative primal-dual gap in `[0, 1]`; 1 when either bound is infinite.
pub fn compute_gap(primal: f64, dual: f64) -> f64 {
    if !primal.is_finite() || !dual.is_finite() {
        return 1.0;
    }
    let denom = primal.abs().max(dual.abs()).max(1e-10);
    ((primal - dual).abs() / denom).min(1.0)
}

/// Primal-dual integral accumulated with the left rectangle rule.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PdiAccumulator {
    pub pdi: f64,
    pub timeline: Vec<(f64, f64)>,
}

impl PdiAccumulator {
    /// Adds `gap * dt` for an interval of length `dt` during which `gap` held.
    pub fn accumulate(&mut self, gap: f64, dt: f64) {
        debug_assert!(dt >= 0.0);
        self.pdi += gap * dt.max(0.0);
    }

    /// Records the gap observed at `clock`, closing the previous interval.
    pub fn observe(&mut self, clock: f64, gap: f64) {
        if let Some(&(prev_clock, prev_gap)) = self.timeline.last() {
            self.accumulate(prev_gap, clock - prev_clock);
        }
        self.timeline.push((clock, gap));
    }
}

/// PDI of a complete `(clock, gap)` timeline.
pub fn timeline_pdi(timeline: &[(f64, f64)]) -> f64 {
    let mut acc = PdiAccumulator::default();
    for &(c, g) in timeline {
        acc.observe(c, g);
    }
    acc.pdi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_examples() {
        assert_eq!(compute_gap(-4.0, -4.0), 0.0);
        assert_eq!(compute_gap(-4.0, -8.0), 0.5);
        assert_eq!(compute_gap(-4.0, f64::NEG_INFINITY), 1.0);
        assert_eq!(compute_gap(f64::INFINITY, 3.0), 1.0);
        assert_eq!(compute_gap(0.0, 0.0), 0.0);
    }

    #[test]
    fn pdi_rectangles() {
        let mut acc = PdiAccumulator::default();
        acc.accumulate(0.0, 7.0);
        assert_eq!(acc.pdi, 0.0);
        let mut acc = PdiAccumulator::default();
        acc.accumulate(0.5, 10.0);
        assert_eq!(acc.pdi, 5.0);
        assert_eq!(timeline_pdi(&[(0.0, 1.0), (2.0, 0.25), (6.0, 0.0)]), 3.0);
    }
}

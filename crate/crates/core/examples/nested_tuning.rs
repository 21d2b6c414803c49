//! Nested cross-validation with median pruning over the hyperparameter
//! space, using a cheap analytic objective in place of training.

use tgbranch::eval::{nested_cv_tune, EvalError, SearchSpace, TrialObjective, TunedConfig};

/// Lower is better; best near actor_lr = 3e-4, entropy 3e-3, d_h = 128.
struct Quadratic;

impl TrialObjective for Quadratic {
    fn evaluate(
        &self,
        cfg: &TunedConfig,
        _train: &[usize],
        valid: &[usize],
        seed: u64,
        report: &mut dyn FnMut(f64) -> bool,
    ) -> Result<f64, EvalError> {
        let base = (cfg.actor_lr / 3e-4).ln().powi(2)
            + (cfg.entropy_coef / 3e-3).ln().powi(2)
            + ((cfg.d_h as f64) / 128.0).ln().powi(2)
            + 0.01 * (valid.len() as f64 + (seed % 3) as f64);
        let mut score = base + 1.0;
        for step in 0..4 {
            score = base + 1.0 / (step + 1) as f64;
            if !report(score) {
                break;
            }
        }
        Ok(score)
    }
}

fn main() {
    let difficulty: Vec<u64> = (0..40).map(|i| 1 + (i * 37 % 200)).collect();
    let out = nested_cv_tune(
        &difficulty,
        &SearchSpace::default(),
        24,
        5,
        2,
        0,
        &Quadratic,
    )
    .unwrap();
    let pruned = out.records.iter().filter(|r| r.pruned).count();
    println!(
        "{} inner runs, {} pruned; best trial {} with mean outer score {:.4}",
        out.records.len(),
        pruned,
        out.best_trial,
        out.best_outer_score
    );
    print!("{}", out.best.to_config_lines());
}

use crate::net::{Mat, PolicyParameters};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Adam with decoupled weight decay and a per-tensor learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
    pub weight_decay: f64,
}

impl AdamW {
    pub fn new(params: &PolicyParameters, weight_decay: f64) -> Self {
        let zeros = || {
            params
                .tensors
                .iter()
                .map(|t| vec![0.0; t.value.data.len()])
                .collect()
        };
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
            weight_decay,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One step; `lr_for(name)` gives the tensor's learning rate.
    pub fn step(
        &mut self,
        params: &mut PolicyParameters,
        grads: &[Mat],
        lr_for: impl Fn(&str) -> f64,
    ) {
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        for (i, t) in params.tensors.iter_mut().enumerate() {
            let lr = lr_for(&t.name);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (k, p) in t.value.data.iter_mut().enumerate() {
                let g = grads[i].data[k];
                m[k] = BETA1 * m[k] + (1.0 - BETA1) * g;
                v[k] = BETA2 * v[k] + (1.0 - BETA2) * g * g;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                *p -= lr * self.weight_decay * *p;
                *p -= lr * mhat / (vhat.sqrt() + EPS);
            }
        }
    }
}

/// Scales `grads` in place so their joint L2 norm is at most `max_norm`; returns the original norm.
pub fn clip_global_norm(grads: &mut [Mat], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads
            .iter_mut()
            .for_each(|g| g.data.iter_mut().for_each(|x| *x *= s));
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetConfig;

    #[test]
    fn zero_lr_leaves_params_bit_exact() {
        let mut p =
            PolicyParameters::init(&NetConfig::with_gate_depth(8, 1, 2, 0.0, 2, 1)).unwrap();
        let before = p.clone();
        let grads: Vec<Mat> = p
            .tensors
            .iter()
            .map(|t| Mat::from_vec(t.value.rows, t.value.cols, vec![0.3; t.value.data.len()]))
            .collect();
        let mut opt = AdamW::new(&p, 0.01);
        opt.step(&mut p, &grads, |_| 0.0);
        assert_eq!(p, before);
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = vec![Mat::from_vec(1, 2, vec![3.0, 4.0])];
        assert_eq!(clip_global_norm(&mut g, 0.5), 5.0);
        assert!((g[0].data[0] - 0.3).abs() < 1e-15 && (g[0].data[1] - 0.4).abs() < 1e-15);
    }
}

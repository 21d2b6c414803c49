//! Tree-gated transformer actor-critic.

use super::tape::{Mat, Tape, Var, MASK_SURROGATE};
use crate::features::{StateFeatures, CANDIDATE_DIM, NODE_DIM, TREE_DIM};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TREE_INPUT_DIM: usize = NODE_DIM + TREE_DIM;
pub const FFN_MULT: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetError {
    #[error("BAD_CONFIG: {0}")]
    BadConfig(String),
    #[error("SHAPE_MISMATCH: {0}")]
    ShapeMismatch(String),
    #[error("NON_FINITE: network output is not finite")]
    NonFinite,
    #[error("MASKED_ACTION: index {0} addresses a padded or missing candidate")]
    MaskedAction(usize),
    #[error("NON_FINITE_GRAD: gradient of `{0}` is not finite")]
    NonFiniteGrad(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub d_h: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub dropout: f64,
    pub gate_depth: usize,
    /// Input widths of the gated head layers; the first equals `d_h`.
    pub head_widths: Vec<usize>,
    pub seed: u64,
}

impl NetConfig {
    /// Three-level gated head with widths `d, d/2, d/4`.
    pub fn new(d_h: usize, n_layers: usize, n_heads: usize, dropout: f64, seed: u64) -> Self {
        Self::with_gate_depth(d_h, n_layers, n_heads, dropout, 3, seed)
    }

    pub fn with_gate_depth(
        d_h: usize,
        n_layers: usize,
        n_heads: usize,
        dropout: f64,
        k: usize,
        seed: u64,
    ) -> Self {
        let head_widths = (0..k).map(|i| (d_h >> i).max(1)).collect();
        Self {
            d_h,
            n_layers,
            n_heads,
            dropout,
            gate_depth: k,
            head_widths,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::BadConfig(m));
        if self.d_h == 0 || self.n_heads == 0 {
            return bad("d_h and n_heads must be positive".into());
        }
        if self.d_h % self.n_heads != 0 {
            return bad(format!(
                "d_h {} not divisible by n_heads {}",
                self.d_h, self.n_heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.gate_depth == 0 || self.head_widths.len() != self.gate_depth {
            return bad("head_widths must list one width per gate level".into());
        }
        if self.head_widths[0] != self.d_h || self.head_widths.contains(&0) {
            return bad("head_widths must start at d_h and be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub value: Mat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Glorot,
    Zeros,
    Ones,
}

/// All network weights, in a fixed order derived from the config.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParameters {
    pub config: NetConfig,
    pub tensors: Vec<NamedTensor>,
}

fn layout(cfg: &NetConfig) -> Vec<(String, usize, usize, Init)> {
    let d = cfg.d_h;
    let mut v: Vec<(String, usize, usize, Init)> = Vec::new();
    let lin = |v: &mut Vec<_>, name: String, out: usize, inp: usize, bias: bool| {
        v.push((format!("{name}.weight"), out, inp, Init::Glorot));
        if bias {
            v.push((format!("{name}.bias"), 1, out, Init::Zeros));
        }
    };
    let norm = |v: &mut Vec<(String, usize, usize, Init)>, name: &str, w: usize| {
        v.push((format!("{name}.gain"), 1, w, Init::Ones));
        v.push((format!("{name}.bias"), 1, w, Init::Zeros));
    };
    norm(&mut v, "cand_norm", CANDIDATE_DIM);
    norm(&mut v, "tree_norm", TREE_INPUT_DIM);
    lin(&mut v, "cand_embed".into(), d, CANDIDATE_DIM, false);
    lin(&mut v, "tree_embed".into(), d, TREE_INPUT_DIM, false);
    lin(&mut v, "fusion".into(), d, 2 * d, false);
    for l in 0..cfg.n_layers {
        norm(&mut v, &format!("enc{l}.norm1"), d);
        for p in ["q", "k", "v", "o"] {
            lin(&mut v, format!("enc{l}.{p}"), d, d, true);
        }
        norm(&mut v, &format!("enc{l}.norm2"), d);
        lin(&mut v, format!("enc{l}.ff1"), FFN_MULT * d, d, true);
        lin(&mut v, format!("enc{l}.ff2"), d, FFN_MULT * d, true);
    }
    norm(&mut v, "enc_norm", d);
    lin(&mut v, "match.tree_query".into(), d, d, false);
    lin(&mut v, "match.cand_query".into(), d, d, false);
    lin(&mut v, "match.gate_e".into(), d, d, false);
    lin(&mut v, "match.gate_d".into(), d, d, false);
    for head in ["actor", "critic"] {
        if head == "critic" {
            lin(&mut v, "critic.mlp1".into(), d, 2 * d, true);
            lin(&mut v, "critic.mlp2".into(), d, d, true);
        }
        for (k, &w) in cfg.head_widths.iter().enumerate() {
            let out = cfg.head_widths.get(k + 1).copied().unwrap_or(1);
            lin(&mut v, format!("{head}.gate{k}"), w, d, false);
            lin(&mut v, format!("{head}.layer{k}"), out, w, true);
        }
    }
    v
}

impl PolicyParameters {
    /// Deterministic in `cfg.seed`.
    pub fn init(cfg: &NetConfig) -> Result<Self, NetError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let tensors = layout(cfg)
            .into_iter()
            .map(|(name, rows, cols, init)| {
                let data = match init {
                    Init::Zeros => vec![0.0; rows * cols],
                    Init::Ones => vec![1.0; rows * cols],
                    Init::Glorot => {
                        let a = (6.0 / (rows + cols) as f64).sqrt();
                        (0..rows * cols).map(|_| rng.gen_range(-a..=a)).collect()
                    }
                };
                NamedTensor {
                    name,
                    value: Mat::from_vec(rows, cols, data),
                }
            })
            .collect();
        Ok(Self {
            config: cfg.clone(),
            tensors,
        })
    }

    /// Checks names and shapes against the config's layout.
    pub fn check_layout(&self) -> Result<(), NetError> {
        self.config.validate()?;
        let expected = layout(&self.config);
        if expected.len() != self.tensors.len() {
            return Err(NetError::ShapeMismatch(format!(
                "expected {} tensors, found {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for ((name, r, c, _), t) in expected.iter().zip(&self.tensors) {
            if *name != t.name || (*r, *c) != t.value.shape() {
                return Err(NetError::ShapeMismatch(format!(
                    "tensor `{}` {:?}, expected `{name}` ({r}, {c})",
                    t.name,
                    t.value.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.tensors.iter().position(|t| t.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Mat> {
        self.index_of(name).map(|i| &self.tensors[i].value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Mat> {
        self.index_of(name).map(move |i| &mut self.tensors[i].value)
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors.iter().map(|t| t.value.shape()).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.value.data.len()).sum()
    }

    /// Reachable only from the value head.
    pub fn is_critic_only(name: &str) -> bool {
        name.starts_with("critic.")
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.value.all_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Rollout,
    /// Dropout active, masks drawn from `seed`.
    Train {
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    /// One entry per slot; padded slots hold the mask surrogate.
    pub logits: Vec<f64>,
    /// Exactly 0 on padded slots.
    pub probs: Vec<f64>,
    pub value: f64,
    pub entropy: f64,
    pub mask: Vec<bool>,
}

impl PolicyOutput {
    pub fn num_candidates(&self) -> usize {
        self.mask.iter().filter(|&&m| !m).count()
    }

    /// Highest-probability unmasked slot, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = usize::MAX;
        for (i, (&p, &m)) in self.probs.iter().zip(&self.mask).enumerate() {
            if !m && (best == usize::MAX || p > self.probs[best]) {
                best = i;
            }
        }
        best
    }
}

/// `(ln probs[action], entropy)`.
pub fn log_prob_entropy(out: &PolicyOutput, action: usize) -> Result<(f64, f64), NetError> {
    if action >= out.mask.len() || out.mask[action] {
        return Err(NetError::MaskedAction(action));
    }
    Ok((out.probs[action].ln(), out.entropy))
}

/// Masked softmax and entropy from raw logits.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> (Vec<f64>, f64) {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| !m)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&l, &m)| if m { 0.0 } else { (l - max).exp() })
        .collect();
    let sum: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= sum);
    let entropy = -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>();
    (probs, entropy)
}

/// A recorded forward pass, ready for backpropagation.
pub struct ForwardGraph<'p> {
    pub tape: Tape<'p>,
    /// `1 x width` actor logits (padded slots not yet masked).
    pub logits: Var,
    /// `1 x 1` state value.
    pub value: Var,
    pub output: PolicyOutput,
}

struct Builder<'p, 'a> {
    params: &'p PolicyParameters,
    tape: &'a mut Tape<'p>,
    rng: Option<ChaCha8Rng>,
    dropout: f64,
}

impl<'p, 'a> Builder<'p, 'a> {
    fn p(&mut self, name: &str) -> Var {
        let i = self
            .params
            .index_of(name)
            .unwrap_or_else(|| panic!("missing tensor `{name}`"));
        self.tape.param(i, &self.params.tensors[i].value)
    }

    fn linear(&mut self, x: Var, name: &str, bias: bool) -> Var {
        let w = self.p(&format!("{name}.weight"));
        let y = self.tape.matmul_nt(x, w);
        if bias {
            let b = self.p(&format!("{name}.bias"));
            self.tape.add_row(y, b)
        } else {
            y
        }
    }

    fn norm(&mut self, x: Var, name: &str) -> Var {
        let g = self.p(&format!("{name}.gain"));
        let b = self.p(&format!("{name}.bias"));
        self.tape.layer_norm(x, g, b)
    }

    fn dropout(&mut self, x: Var) -> Var {
        let Some(rng) = self.rng.as_mut() else {
            return x;
        };
        if self.dropout == 0.0 {
            return x;
        }
        let keep = 1.0 - self.dropout;
        let n = self.tape.value(x).data.len();
        let factors = (0..n)
            .map(|_| {
                if rng.gen::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        self.tape.scale_by(x, factors)
    }

    fn encoder_layer(&mut self, z: Var, l: usize, mask: &[bool]) -> Var {
        let cfg = &self.params.config;
        let (d, heads) = (cfg.d_h, cfg.n_heads);
        let dk = d / heads;
        let h = self.norm(z, &format!("enc{l}.norm1"));
        let q = self.linear(h, &format!("enc{l}.q"), true);
        let k = self.linear(h, &format!("enc{l}.k"), true);
        let v = self.linear(h, &format!("enc{l}.v"), true);
        let scale = 1.0 / (dk as f64).sqrt();
        let width = mask.len();
        let mut outs = Vec::with_capacity(heads);
        for head in 0..heads {
            let qh = self.tape.slice_cols(q, head * dk, dk);
            let kh = self.tape.slice_cols(k, head * dk, dk);
            let vh = self.tape.slice_cols(v, head * dk, dk);
            let scores = self.tape.matmul_nt(qh, kh);
            let scores = self.tape.scale_by(scores, vec![scale; width * width]);
            let attn = self.tape.softmax_rows(scores, mask);
            outs.push(self.tape.matmul(attn, vh));
        }
        let cat = if heads == 1 {
            outs[0]
        } else {
            self.tape.concat_cols(&outs)
        };
        let a = self.linear(cat, &format!("enc{l}.o"), true);
        let a = self.dropout(a);
        let z = self.tape.add(z, a);
        let h = self.norm(z, &format!("enc{l}.norm2"));
        let f = self.linear(h, &format!("enc{l}.ff1"), true);
        let f = self.tape.relu(f);
        let f = self.linear(f, &format!("enc{l}.ff2"), true);
        let f = self.dropout(f);
        self.tape.add(z, f)
    }

    /// Gated reduction to one scalar per row of `q`.
    fn gated_head(&mut self, mut q: Var, tree: Var, head: &str) -> Var {
        let k_max = self.params.config.gate_depth;
        for k in 0..k_max {
            let u = self.linear(tree, &format!("{head}.gate{k}"), false);
            let g = self.tape.sigmoid(u);
            let gated = self.tape.mul_row(q, g);
            q = self.linear(gated, &format!("{head}.layer{k}"), true);
            if k + 1 < k_max {
                q = self.tape.relu(q);
            }
        }
        q
    }
}

/// Runs the network and records the computation.
pub fn forward_graph<'p>(
    params: &'p PolicyParameters,
    state: &StateFeatures,
    mode: Mode,
) -> Result<ForwardGraph<'p>, NetError> {
    let n = state.num_candidates();
    if n == 0 {
        return Err(NetError::ShapeMismatch("state has no candidates".into()));
    }
    let width = state.pad_mask.len().max(n);
    let mask = state.mask_for_width(width);
    if !state.pad_mask.is_empty() && state.pad_mask != mask {
        return Err(NetError::ShapeMismatch(
            "pad_mask must flag exactly the trailing padded slots".into(),
        ));
    }
    let mut tape = Tape::new(params.shapes());
    let rng = match mode {
        Mode::Train { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Mode::Rollout => None,
    };
    let mut b = Builder {
        params,
        tape: &mut tape,
        rng,
        dropout: params.config.dropout,
    };

    let cand_rows: Vec<f64> = state
        .padded_candidates(width)
        .into_iter()
        .flatten()
        .collect();
    let cands = b
        .tape
        .constant(Mat::from_vec(width, CANDIDATE_DIM, cand_rows));
    let mut tree_in = state.node.to_vec();
    tree_in.extend_from_slice(&state.tree);
    let tree_in = b.tape.constant(Mat::row_vector(tree_in));

    let c = b.norm(cands, "cand_norm");
    let c = b.linear(c, "cand_embed", false);
    let t = b.norm(tree_in, "tree_norm");
    let t = b.linear(t, "tree_embed", false);
    let t_rep = b.tape.repeat_row(t, width);
    let fused = b.tape.concat_cols(&[c, t_rep]);
    let mut z = b.linear(fused, "fusion", false);
    z = b.dropout(z);
    for l in 0..params.config.n_layers {
        z = b.encoder_layer(z, l, &mask);
    }
    let z = b.norm(z, "enc_norm");

    // Soft mutual attention between tree context and candidates.
    let tq = b.linear(t, "match.tree_query", false);
    let alpha_scores = b.tape.matmul_nt(tq, z);
    let alpha = b.tape.softmax_rows(alpha_scores, &mask);
    let e = b.tape.matmul(alpha, z);
    let cq = b.linear(z, "match.cand_query", false);
    let beta_scores = b.tape.matmul_nt(t, cq);
    let beta = b.tape.softmax_rows(beta_scores, &mask);
    let beta_col = b.tape.transpose(beta);
    let dmat = b.tape.matmul(beta_col, t);
    let ge = b.linear(e, "match.gate_e", false);
    let gd = b.linear(dmat, "match.gate_d", false);
    let gate_in = b.tape.add_row(gd, ge);
    let gate = b.tape.sigmoid(gate_in);
    let e_rep = b.tape.repeat_row(e, width);
    let diff = b.tape.sub(e_rep, dmat);
    let gated = b.tape.mul(gate, diff);
    let r = b.tape.add(dmat, gated);

    let q = b.gated_head(r, t, "actor");
    let logits = b.tape.transpose(q);

    let weights: Vec<f64> = mask
        .iter()
        .map(|&m| if m { 0.0 } else { 1.0 / n as f64 })
        .collect();
    let w = b.tape.constant(Mat::row_vector(weights));
    let pooled = b.tape.matmul(w, r);
    let x = b.tape.concat_cols(&[pooled, t]);
    let h = b.linear(x, "critic.mlp1", true);
    let h = b.tape.relu(h);
    let h = b.linear(h, "critic.mlp2", true);
    let h = b.tape.relu(h);
    let value = b.gated_head(h, t, "critic");

    let raw = tape.value(logits).data.clone();
    let v = tape.value(value).data[0];
    if !raw.iter().all(|l| l.is_finite()) || !v.is_finite() {
        return Err(NetError::NonFinite);
    }
    let (probs, entropy) = masked_softmax(&raw, &mask);
    let shown = raw
        .iter()
        .zip(&mask)
        .map(|(&l, &m)| if m { MASK_SURROGATE } else { l })
        .collect();
    let output = PolicyOutput {
        logits: shown,
        probs,
        value: v,
        entropy,
        mask,
    };
    Ok(ForwardGraph {
        tape,
        logits,
        value,
        output,
    })
}

pub fn forward(
    params: &PolicyParameters,
    state: &StateFeatures,
    mode: Mode,
) -> Result<PolicyOutput, NetError> {
    forward_graph(params, state, mode).map(|g| g.output)
}

/// Parameter gradients for the adjoints `dl/dlogits` (one per slot) and `dl/dvalue`.
pub fn backward(graph: &ForwardGraph<'_>, d_logits: &[f64], d_value: f64) -> Vec<Mat> {
    let mut seeds = Vec::with_capacity(2);
    if d_logits.iter().any(|&g| g != 0.0) {
        seeds.push((graph.logits, Mat::row_vector(d_logits.to_vec())));
    }
    if d_value != 0.0 {
        seeds.push((graph.value, Mat::from_vec(1, 1, vec![d_value])));
    }
    graph.tape.backward(&seeds)
}

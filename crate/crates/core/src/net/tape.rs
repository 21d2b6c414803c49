//! Minimal reverse-mode differentiation over dense row-major matrices.

use std::borrow::Cow;

const LN_EPS: f64 = 1e-5;
/// Additive surrogate for masked attention scores.
pub const MASK_SURROGATE: f64 = -1e9;

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::from_vec(1, n, data)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self * other`.
    fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul inner dimension");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * other^T`.
    fn matmul_nt(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "matmul_nt inner dimension");
        let mut out = Mat::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = a.iter().zip(other.row(j)).map(|(x, y)| x * y).sum();
            }
        }
        out
    }

    /// `self^T * other`.
    fn matmul_tn(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "matmul_tn inner dimension");
        let mut out = Mat::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let brow = other.row(k);
            for i in 0..self.cols {
                let a = self.data[k * self.cols + i];
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip(&self, other: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
        assert_eq!(self.shape(), other.shape(), "elementwise shape");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    fn sum_rows(&self) -> Mat {
        let mut out = Mat::zeros(1, self.cols);
        for r in 0..self.rows {
            for (o, v) in out.data.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Const,
    Param(usize),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    RepeatRow(Var),
    Sigmoid(Var),
    Relu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    SoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ScaleBy(Var, Vec<f64>),
}

struct Node<'p> {
    value: Cow<'p, Mat>,
    op: Op,
}

/// Records a computation for one backward pass.
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
    num_params: usize,
    param_shapes: Vec<(usize, usize)>,
}

impl<'p> Tape<'p> {
    pub fn new(param_shapes: Vec<(usize, usize)>) -> Self {
        Self {
            nodes: Vec::new(),
            num_params: param_shapes.len(),
            param_shapes,
        }
    }

    fn push(&mut self, value: Cow<'p, Mat>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, m: Mat) -> Var {
        self.push(Cow::Owned(m), Op::Const)
    }

    pub fn param(&mut self, index: usize, value: &'p Mat) -> Var {
        assert!(index < self.num_params);
        self.push(Cow::Borrowed(value), Op::Param(index))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(Cow::Owned(v), Op::MatMul(a, b))
    }

    /// `a * b^T`; with `b` a weight matrix `(out, in)` this is a linear map of the rows of `a`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_nt(self.value(b));
        self.push(Cow::Owned(v), Op::MatMulNt(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(Cow::Owned(v), Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x + y);
        self.push(Cow::Owned(v), Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x - y);
        self.push(Cow::Owned(v), Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x * y);
        self.push(Cow::Owned(v), Op::Mul(a, b))
    }

    fn broadcast(&self, x: Var, row: Var, f: impl Fn(f64, f64) -> f64) -> Mat {
        let xm = self.value(x);
        let rm = self.value(row);
        assert_eq!((rm.rows, rm.cols), (1, xm.cols), "row broadcast shape");
        let mut out = xm.clone();
        for r in 0..out.rows {
            for c in 0..out.cols {
                let i = r * out.cols + c;
                out.data[i] = f(out.data[i], rm.data[c]);
            }
        }
        out
    }

    /// Adds a `1 x d` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let v = self.broadcast(x, row, |a, b| a + b);
        self.push(Cow::Owned(v), Op::AddRow(x, row))
    }

    /// Multiplies every row of `x` elementwise by a `1 x d` row.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Var {
        let v = self.broadcast(x, row, |a, b| a * b);
        self.push(Cow::Owned(v), Op::MulRow(x, row))
    }

    /// Stacks a `1 x d` row `n` times.
    pub fn repeat_row(&mut self, row: Var, n: usize) -> Var {
        let r = self.value(row);
        assert_eq!(r.rows, 1);
        let mut data = Vec::with_capacity(n * r.cols);
        for _ in 0..n {
            data.extend_from_slice(&r.data);
        }
        let v = Mat::from_vec(n, r.cols, data);
        self.push(Cow::Owned(v), Op::RepeatRow(row))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(Cow::Owned(v), Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(Cow::Owned(v), Op::Relu(a))
    }

    /// Row-wise layer normalization with `1 x d` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xm = self.value(x);
        let (n, d) = xm.shape();
        let g = self.value(gain);
        let b = self.value(bias);
        let mut xhat = vec![0.0; n * d];
        let mut inv_std = vec![0.0; n];
        let mut out = Mat::zeros(n, d);
        for r in 0..n {
            let row = xm.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std[r] = is;
            for c in 0..d {
                let h = (row[c] - mean) * is;
                xhat[r * d + c] = h;
                out.data[r * d + c] = h * g.data[c] + b.data[c];
            }
        }
        self.push(
            Cow::Owned(out),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        )
    }

    /// Row-wise softmax; columns flagged in `key_mask` get the additive
    /// surrogate and their probabilities are then set to exactly zero.
    pub fn softmax_rows(&mut self, x: Var, key_mask: &[bool]) -> Var {
        let xm = self.value(x);
        assert_eq!(key_mask.len(), xm.cols, "mask width");
        let mut out = xm.clone();
        for r in 0..out.rows {
            let row = &mut out.data[r * xm.cols..(r + 1) * xm.cols];
            for (v, &m) in row.iter_mut().zip(key_mask) {
                if m {
                    *v += MASK_SURROGATE;
                }
            }
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for (v, &m) in row.iter_mut().zip(key_mask) {
                *v = if m { 0.0 } else { *v / sum };
            }
        }
        self.push(Cow::Owned(out), Op::SoftmaxRows(x))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Mat::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let m = self.value(p);
                assert_eq!(m.rows, rows, "concat row count");
                out.data[r * cols + off..r * cols + off + m.cols].copy_from_slice(m.row(r));
                off += m.cols;
            }
        }
        self.push(Cow::Owned(out), Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let m = self.value(x);
        let mut out = Mat::zeros(m.rows, len);
        for r in 0..m.rows {
            out.data[r * len..(r + 1) * len].copy_from_slice(&m.row(r)[start..start + len]);
        }
        self.push(Cow::Owned(out), Op::SliceCols(x, start))
    }

    /// Elementwise product with a constant of the same shape (dropout masks, weights).
    pub fn scale_by(&mut self, x: Var, factors: Vec<f64>) -> Var {
        let v = {
            let m = self.value(x);
            assert_eq!(factors.len(), m.data.len());
            Mat {
                rows: m.rows,
                cols: m.cols,
                data: m.data.iter().zip(&factors).map(|(a, b)| a * b).collect(),
            }
        };
        self.push(Cow::Owned(v), Op::ScaleBy(x, factors))
    }

    /// Back-propagates the given output adjoints and returns per-parameter gradients.
    pub fn backward(&self, seeds: &[(Var, Mat)]) -> Vec<Mat> {
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut param_grads: Vec<Mat> = self
            .param_shapes
            .iter()
            .map(|&(r, c)| Mat::zeros(r, c))
            .collect();
        let acc = |grads: &mut Vec<Option<Mat>>, v: Var, g: Mat| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        };
        for (v, g) in seeds {
            assert_eq!(self.value(*v).shape(), g.shape(), "seed shape");
            acc(&mut grads, *v, g.clone());
        }
        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            let out = &self.nodes[i].value;
            match &self.nodes[i].op {
                Op::Const => {}
                Op::Param(p) => param_grads[*p].add_assign(&g),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, g.matmul_nt(bv));
                    acc(&mut grads, *b, av.matmul_tn(&g));
                }
                Op::MatMulNt(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, g.matmul(bv));
                    acc(&mut grads, *b, g.matmul_tn(av));
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose()),
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.map(|x| -x));
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    acc(&mut grads, *a, g.zip(self.value(*b), |x, y| x * y));
                    acc(&mut grads, *b, g.zip(self.value(*a), |x, y| x * y));
                }
                Op::AddRow(x, row) => {
                    acc(&mut grads, *row, g.sum_rows());
                    acc(&mut grads, *x, g);
                }
                Op::MulRow(x, row) => {
                    let xv = self.value(*x);
                    let rv = self.value(*row);
                    acc(&mut grads, *row, g.zip(xv, |a, b| a * b).sum_rows());
                    let mut gx = g;
                    for r in 0..gx.rows {
                        for c in 0..gx.cols {
                            gx.data[r * gx.cols + c] *= rv.data[c];
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::RepeatRow(row) => acc(&mut grads, *row, g.sum_rows()),
                Op::Sigmoid(a) => acc(&mut grads, *a, g.zip(out, |gi, s| gi * s * (1.0 - s))),
                Op::Relu(a) => acc(
                    &mut grads,
                    *a,
                    g.zip(self.value(*a), |gi, x| if x > 0.0 { gi } else { 0.0 }),
                ),
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let (n, d) = g.shape();
                    let gv = self.value(*gain);
                    let mut dgain = Mat::zeros(1, d);
                    let mut dx = Mat::zeros(n, d);
                    for r in 0..n {
                        let mut sum_dh = 0.0;
                        let mut sum_dh_h = 0.0;
                        for c in 0..d {
                            let gi = g.data[r * d + c];
                            let h = xhat[r * d + c];
                            dgain.data[c] += gi * h;
                            let dh = gi * gv.data[c];
                            sum_dh += dh;
                            sum_dh_h += dh * h;
                        }
                        let df = d as f64;
                        for c in 0..d {
                            let h = xhat[r * d + c];
                            let dh = g.data[r * d + c] * gv.data[c];
                            dx.data[r * d + c] =
                                inv_std[r] / df * (df * dh - sum_dh - h * sum_dh_h);
                        }
                    }
                    acc(&mut grads, *bias, g.sum_rows());
                    acc(&mut grads, *gain, dgain);
                    acc(&mut grads, *x, dx);
                }
                Op::SoftmaxRows(x) => {
                    let mut dx = Mat::zeros(g.rows, g.cols);
                    for r in 0..g.rows {
                        let p = out.row(r);
                        let gr = g.row(r);
                        let dot: f64 = p.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for c in 0..g.cols {
                            dx.data[r * g.cols + c] = p[c] * (gr[c] - dot);
                        }
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = self.value(p).cols;
                        let mut part = Mat::zeros(g.rows, w);
                        for r in 0..g.rows {
                            part.data[r * w..(r + 1) * w].copy_from_slice(&g.row(r)[off..off + w]);
                        }
                        acc(&mut grads, p, part);
                        off += w;
                    }
                }
                Op::SliceCols(x, start) => {
                    let xv = self.value(*x);
                    let mut full = Mat::zeros(xv.rows, xv.cols);
                    for r in 0..g.rows {
                        full.data[r * xv.cols + start..r * xv.cols + start + g.cols]
                            .copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *x, full);
                }
                Op::ScaleBy(x, f) => {
                    let mut gx = g;
                    gx.data.iter_mut().zip(f).for_each(|(a, b)| *a *= b);
                    acc(&mut grads, *x, gx);
                }
            }
        }
        param_grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central differences of `f` with respect to every entry of `p`.
    fn numeric(p: &Mat, f: impl Fn(&Mat) -> f64) -> Vec<f64> {
        let h = 1e-6;
        (0..p.data.len())
            .map(|i| {
                let mut a = p.clone();
                a.data[i] += h;
                let mut b = p.clone();
                b.data[i] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            })
            .collect()
    }

    fn check(p: Mat, build: impl Fn(&mut Tape<'_>, Var) -> Var) {
        let eval = |m: &Mat| {
            let mut t = Tape::new(vec![m.shape()]);
            let x = t.param(0, m);
            let y = build(&mut t, x);
            t.value(y)
                .data
                .iter()
                .enumerate()
                .map(|(i, v)| v * (i as f64 + 1.0))
                .sum::<f64>()
        };
        let mut t = Tape::new(vec![p.shape()]);
        let x = t.param(0, &p);
        let y = build(&mut t, x);
        let ym = t.value(y);
        let seed = Mat::from_vec(
            ym.rows,
            ym.cols,
            (0..ym.data.len()).map(|i| i as f64 + 1.0).collect(),
        );
        let g = t.backward(&[(y, seed)]);
        for (a, n) in g[0].data.iter().zip(numeric(&p, eval)) {
            assert!((a - n).abs() < 1e-6 * (1.0 + a.abs()), "{a} vs {n}");
        }
    }

    fn sample() -> Mat {
        Mat::from_vec(
            3,
            4,
            vec![
                0.3, -1.2, 0.7, 2.0, -0.4, 0.1, 0.9, -0.8, 1.5, -0.2, 0.05, 0.6,
            ],
        )
    }

    #[test]
    fn matmul_grads() {
        check(sample(), |t, x| {
            let w = t.constant(Mat::from_vec(
                2,
                4,
                vec![1.0, -2.0, 0.5, 0.3, 0.2, 0.1, -0.7, 1.1],
            ));
            let y = t.matmul_nt(x, w);
            let yt = t.transpose(y);
            let z = t.matmul(yt, x);
            let zz = t.matmul_nt(z, z);
            t.concat_cols(&[z, zz])
        });
    }

    #[test]
    fn layer_norm_and_softmax_grads() {
        check(sample(), |t, x| {
            let g = t.constant(Mat::row_vector(vec![1.0, 0.5, -1.5, 2.0]));
            let b = t.constant(Mat::row_vector(vec![0.1, 0.0, 0.2, -0.3]));
            let y = t.layer_norm(x, g, b);
            let s = t.softmax_rows(y, &[false, true, false, false]);
            let r = t.sigmoid(y);
            let m = t.mul(s, r);
            t.relu(m)
        });
    }

    #[test]
    fn broadcast_and_slice_grads() {
        check(sample(), |t, x| {
            let row = t.slice_cols(x, 1, 2);
            let first = t.slice_cols(row, 0, 2);
            let r0 = t.transpose(first);
            let r0 = t.slice_cols(r0, 0, 1);
            let r0 = t.transpose(r0);
            let rep = t.repeat_row(r0, 3);
            let a = t.add_row(row, r0);
            let m = t.mul_row(a, r0);
            let s = t.sub(m, rep);
            t.scale_by(s, vec![0.5, 2.0, -1.0, 1.0, 3.0, 0.0])
        });
    }

    #[test]
    fn masked_softmax_zeroes_padding() {
        let mut t = Tape::new(vec![]);
        let x = t.constant(Mat::row_vector(vec![1.0, 2.0, 3.0]));
        let s = t.softmax_rows(x, &[false, false, true]);
        let v = t.value(s);
        assert_eq!(v.data[2], 0.0);
        assert!((v.data[0] + v.data[1] - 1.0).abs() < 1e-15);
    }
}

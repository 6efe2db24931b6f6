//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! A [`Graph`] records every operation as it is evaluated; [`Graph::backward`]
//! walks the tape in reverse and returns gradients for the trainable parameter
//! leaves. Nodes that cannot reach a trainable leaf carry no gradient.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};

use crate::nn::mat::{dot, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    CausalSoftmax {
        x: Var,
        scale: f64,
    },
    Gather {
        table: Var,
        idx: Vec<usize>,
    },
    SelectRows {
        x: Var,
        idx: Vec<usize>,
    },
    ReplaceRows {
        base: Var,
        rows: Var,
        pos: Vec<usize>,
    },
    Softplus(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Mat,
    },
    Sum(Vec<Var>),
}

struct Node<'a> {
    value: Cow<'a, Mat>,
    op: Op,
    needs_grad: bool,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Parameter gradients keyed by parameter index.
pub type ParamGrads = BTreeMap<usize, Mat>;

#[derive(Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
    params: HashMap<usize, Var>,
}

fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044_715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let t = (c * (x + 0.044_715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * 0.044_715 * x * x)
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn map(m: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    Mat::from_vec(m.rows(), m.cols(), m.data().iter().map(|&x| f(x)).collect())
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).get(0, 0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Mat>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant input.
    pub fn constant(&mut self, m: Mat) -> Var {
        self.push(Cow::Owned(m), Op::Leaf, false)
    }

    /// Borrowed parameter tensor. Frozen parameters become constants. Repeated
    /// calls with the same id return the same node.
    pub fn param(&mut self, id: usize, value: &'a Mat, trainable: bool) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = if trainable {
            self.push(Cow::Borrowed(value), Op::Param(id), true)
        } else {
            self.push(Cow::Borrowed(value), Op::Leaf, false)
        };
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(Cow::Owned(out), Op::MatMul(a, b), ng)
    }

    /// `a * b^T`; with `b` a weight stored `out x in`, this is a linear layer.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul_t(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(Cow::Owned(out), Op::MatMulT(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(Cow::Owned(out), Op::Add(a, b), ng)
    }

    /// Adds a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let b = self.value(bias);
        assert_eq!(b.rows(), 1, "add_row bias must be a single row");
        let mut out = self.value(a).clone();
        for r in 0..out.rows() {
            for (o, x) in out.row_mut(r).iter_mut().zip(b.row(0)) {
                *o += x;
            }
        }
        let ng = self.ng(a) || self.ng(bias);
        self.push(Cow::Owned(out), Op::AddRow(a, bias), ng)
    }

    /// `x W^T + b` with `W` stored `out x in` and `b` as `1 x out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let h = self.matmul_t(x, w);
        self.add_row(h, b)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut out = self.value(a).clone();
        out.scale(s);
        let ng = self.ng(a);
        self.push(Cow::Owned(out), Op::Scale(a, s), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = map(self.value(a), |x| if x > 0.0 { x } else { 0.0 });
        let ng = self.ng(a);
        self.push(Cow::Owned(out), Op::Relu(a), ng)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = map(self.value(a), gelu);
        let ng = self.ng(a);
        self.push(Cow::Owned(out), Op::Gelu(a), ng)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let out = map(self.value(a), softplus);
        let ng = self.ng(a);
        self.push(Cow::Owned(out), Op::Softplus(a), ng)
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let (n, d) = xv.shape();
        let mut xhat = Mat::zeros(n, d);
        let mut inv_std = Vec::with_capacity(n);
        for r in 0..n {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for (o, v) in xhat.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
            inv_std.push(is);
        }
        let (g, b) = (self.value(gain), self.value(bias));
        let mut out = xhat.clone();
        for r in 0..n {
            for ((o, gv), bv) in out.row_mut(r).iter_mut().zip(g.row(0)).zip(b.row(0)) {
                *o = *o * gv + bv;
            }
        }
        let ng = self.ng(x) || self.ng(gain) || self.ng(bias);
        self.push(
            Cow::Owned(out),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            ng,
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Var {
        let xv = self.value(x);
        let mut out = Mat::zeros(xv.rows(), width);
        for r in 0..xv.rows() {
            out.row_mut(r).copy_from_slice(&xv.row(r)[start..start + width]);
        }
        let ng = self.ng(x);
        self.push(Cow::Owned(out), Op::SliceCols { x, start }, ng)
    }

    pub fn concat_cols(&mut self, parts: Vec<Var>) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Mat::zeros(rows, cols);
        let mut off = 0;
        for &p in &parts {
            let pv = self.value(p);
            for r in 0..rows {
                out.row_mut(r)[off..off + pv.cols()].copy_from_slice(pv.row(r));
            }
            off += pv.cols();
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(Cow::Owned(out), Op::ConcatCols(parts), ng)
    }

    /// Row-wise softmax of `scale * x` over columns `j <= i`; later columns are 0.
    pub fn causal_softmax(&mut self, x: Var, scale: f64) -> Var {
        let xv = self.value(x);
        let (n, m) = xv.shape();
        let mut out = Mat::zeros(n, m);
        for i in 0..n {
            let visible = (i + 1).min(m);
            let row = &xv.row(i)[..visible];
            let max = row.iter().map(|v| v * scale).fold(f64::NEG_INFINITY, f64::max);
            let orow = out.row_mut(i);
            let mut z = 0.0;
            for j in 0..visible {
                let e = (row[j] * scale - max).exp();
                orow[j] = e;
                z += e;
            }
            for o in orow[..visible].iter_mut() {
                *o /= z;
            }
        }
        let ng = self.ng(x);
        self.push(Cow::Owned(out), Op::CausalSoftmax { x, scale }, ng)
    }

    /// Rows of `table` at `idx`.
    pub fn gather(&mut self, table: Var, idx: Vec<usize>) -> Var {
        let t = self.value(table);
        let mut out = Mat::zeros(idx.len(), t.cols());
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(i));
        }
        let ng = self.ng(table);
        self.push(Cow::Owned(out), Op::Gather { table, idx }, ng)
    }

    pub fn select_rows(&mut self, x: Var, idx: Vec<usize>) -> Var {
        let xv = self.value(x);
        let mut out = Mat::zeros(idx.len(), xv.cols());
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(xv.row(i));
        }
        let ng = self.ng(x);
        self.push(Cow::Owned(out), Op::SelectRows { x, idx }, ng)
    }

    /// `base` with row `pos[k]` replaced by row `k` of `rows`.
    pub fn replace_rows(&mut self, base: Var, rows: Var, pos: Vec<usize>) -> Var {
        let mut out = self.value(base).clone();
        let rv = self.value(rows);
        assert_eq!(rv.rows(), pos.len(), "replace_rows count");
        for (k, &p) in pos.iter().enumerate() {
            out.row_mut(p).copy_from_slice(rv.row(k));
        }
        let ng = self.ng(base) || self.ng(rows);
        self.push(Cow::Owned(out), Op::ReplaceRows { base, rows, pos }, ng)
    }

    /// Mean negative log-softmax of `targets[r]` in row `r` of `logits`.
    pub fn cross_entropy(&mut self, logits: Var, targets: Vec<usize>) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.rows(), targets.len(), "cross_entropy rows");
        let mut probs = Mat::zeros(lv.rows(), lv.cols());
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = lv.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let log_z = z.ln() + max;
            total += log_z - row[t];
            for (p, v) in probs.row_mut(r).iter_mut().zip(row) {
                *p = (v - log_z).exp();
            }
        }
        let n = targets.len().max(1) as f64;
        let ng = self.ng(logits);
        self.push(
            Cow::Owned(Mat::filled(1, 1, total / n)),
            Op::CrossEntropy { logits, targets, probs },
            ng,
        )
    }

    pub fn sum(&mut self, parts: Vec<Var>) -> Var {
        let mut out = self.value(parts[0]).clone();
        for &p in &parts[1..] {
            out.add_assign(self.value(p));
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(Cow::Owned(out), Op::Sum(parts), ng)
    }

    /// Gradients of the scalar `loss` for every trainable parameter it reaches.
    pub fn backward(&self, loss: Var) -> ParamGrads {
        assert_eq!(self.value(loss).shape(), (1, 1), "loss must be a scalar");
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Mat::filled(1, 1, 1.0));
        let mut out = ParamGrads::new();
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    out.entry(*id)
                        .and_modify(|m: &mut Mat| m.add_assign(&g))
                        .or_insert(g);
                }
                Op::MatMul(a, b) => {
                    if self.ng(*a) {
                        let ga = g.matmul_t(self.value(*b));
                        self.acc(&mut grads, *a, ga);
                    }
                    if self.ng(*b) {
                        let gb = self.value(*a).t_matmul(&g);
                        self.acc(&mut grads, *b, gb);
                    }
                }
                Op::MatMulT(a, b) => {
                    if self.ng(*a) {
                        let ga = g.matmul(self.value(*b));
                        self.acc(&mut grads, *a, ga);
                    }
                    if self.ng(*b) {
                        let gb = g.t_matmul(self.value(*a));
                        self.acc(&mut grads, *b, gb);
                    }
                }
                Op::Add(a, b) => {
                    if self.ng(*b) {
                        self.acc(&mut grads, *b, g.clone());
                    }
                    self.acc(&mut grads, *a, g);
                }
                Op::AddRow(a, bias) => {
                    if self.ng(*bias) {
                        let mut gb = Mat::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            for (o, v) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                                *o += v;
                            }
                        }
                        self.acc(&mut grads, *bias, gb);
                    }
                    self.acc(&mut grads, *a, g);
                }
                Op::Scale(a, s) => {
                    let mut ga = g;
                    ga.scale(*s);
                    self.acc(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let ga = Mat::from_vec(
                        g.rows(),
                        g.cols(),
                        g.data()
                            .iter()
                            .zip(x.data())
                            .map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 })
                            .collect(),
                    );
                    self.acc(&mut grads, *a, ga);
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let ga = Mat::from_vec(
                        g.rows(),
                        g.cols(),
                        g.data().iter().zip(x.data()).map(|(gv, xv)| gv * gelu_grad(*xv)).collect(),
                    );
                    self.acc(&mut grads, *a, ga);
                }
                Op::Softplus(a) => {
                    let x = self.value(*a);
                    let ga = Mat::from_vec(
                        g.rows(),
                        g.cols(),
                        g.data().iter().zip(x.data()).map(|(gv, xv)| gv * sigmoid(*xv)).collect(),
                    );
                    self.acc(&mut grads, *a, ga);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let (n, d) = xhat.shape();
                    let gv = self.value(*gain);
                    if self.ng(*gain) || self.ng(*bias) {
                        let mut gg = Mat::zeros(1, d);
                        let mut gb = Mat::zeros(1, d);
                        for r in 0..n {
                            for c in 0..d {
                                gg.row_mut(0)[c] += g.get(r, c) * xhat.get(r, c);
                                gb.row_mut(0)[c] += g.get(r, c);
                            }
                        }
                        if self.ng(*gain) {
                            self.acc(&mut grads, *gain, gg);
                        }
                        if self.ng(*bias) {
                            self.acc(&mut grads, *bias, gb);
                        }
                    }
                    if self.ng(*x) {
                        let mut gx = Mat::zeros(n, d);
                        for r in 0..n {
                            let dxhat: Vec<f64> =
                                g.row(r).iter().zip(gv.row(0)).map(|(a, b)| a * b).collect();
                            let mean_d = dxhat.iter().sum::<f64>() / d as f64;
                            let mean_dx = dot(&dxhat, xhat.row(r)) / d as f64;
                            for (c, o) in gx.row_mut(r).iter_mut().enumerate() {
                                *o = inv_std[r] * (dxhat[c] - mean_d - xhat.get(r, c) * mean_dx);
                            }
                        }
                        self.acc(&mut grads, *x, gx);
                    }
                }
                Op::SliceCols { x, start } => {
                    let xv = self.value(*x);
                    let mut gx = Mat::zeros(xv.rows(), xv.cols());
                    for r in 0..g.rows() {
                        gx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    self.acc(&mut grads, *x, gx);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        if self.ng(p) {
                            let mut gp = Mat::zeros(g.rows(), w);
                            for r in 0..g.rows() {
                                gp.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                            }
                            self.acc(&mut grads, p, gp);
                        }
                        off += w;
                    }
                }
                Op::CausalSoftmax { x, scale } => {
                    let p = &node.value;
                    let mut gx = Mat::zeros(p.rows(), p.cols());
                    for i in 0..p.rows() {
                        let visible = (i + 1).min(p.cols());
                        let pr = &p.row(i)[..visible];
                        let gr = &g.row(i)[..visible];
                        let inner = dot(pr, gr);
                        for (j, o) in gx.row_mut(i)[..visible].iter_mut().enumerate() {
                            *o = scale * pr[j] * (gr[j] - inner);
                        }
                    }
                    self.acc(&mut grads, *x, gx);
                }
                Op::Gather { table, idx } => {
                    let t = self.value(*table);
                    let mut gt = Mat::zeros(t.rows(), t.cols());
                    for (r, &i) in idx.iter().enumerate() {
                        for (o, v) in gt.row_mut(i).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    self.acc(&mut grads, *table, gt);
                }
                Op::SelectRows { x, idx } => {
                    let xv = self.value(*x);
                    let mut gx = Mat::zeros(xv.rows(), xv.cols());
                    for (r, &i) in idx.iter().enumerate() {
                        for (o, v) in gx.row_mut(i).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    self.acc(&mut grads, *x, gx);
                }
                Op::ReplaceRows { base, rows, pos } => {
                    if self.ng(*rows) {
                        let mut gr = Mat::zeros(pos.len(), g.cols());
                        for (k, &p) in pos.iter().enumerate() {
                            gr.row_mut(k).copy_from_slice(g.row(p));
                        }
                        self.acc(&mut grads, *rows, gr);
                    }
                    if self.ng(*base) {
                        let mut gb = g;
                        for &p in pos {
                            gb.row_mut(p).iter_mut().for_each(|v| *v = 0.0);
                        }
                        self.acc(&mut grads, *base, gb);
                    }
                }
                Op::CrossEntropy { logits, targets, probs } => {
                    let scale = g.get(0, 0) / targets.len().max(1) as f64;
                    let mut gl = probs.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        gl.row_mut(r)[t] -= 1.0;
                    }
                    gl.scale(scale);
                    self.acc(&mut grads, *logits, gl);
                }
                Op::Sum(parts) => {
                    for &p in parts {
                        if self.ng(p) {
                            self.acc(&mut grads, p, g.clone());
                        }
                    }
                }
            }
        }
        out
    }

    fn acc(&self, grads: &mut [Option<Mat>], v: Var, g: Mat) {
        if !self.ng(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }
}

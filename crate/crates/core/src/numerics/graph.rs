//! Reverse-mode differentiation over a per-forward tape.
//!
//! A [`Graph`] records every operation eagerly as it is applied; values are
//! available immediately through [`Graph::value`]. [`Graph::backward`] walks
//! the tape once in reverse and returns the gradient of a scalar output with
//! respect to every node that depends on a trainable leaf.

use std::collections::HashMap;

use super::params::ParamStore;
use super::tensor::{gemm_acc, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    MulConst(Var, Tensor),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor,
        inv_std: Vec<f64>,
    },
    Softmax(Var),
    Transpose(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    Mix {
        a: Var,
        b: Var,
        lam: Var,
        rows: Option<Vec<bool>>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Tensor,
    },
    Sum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    bound: HashMap<String, Var>,
}

pub struct Grads {
    grads: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

/// Sentinel added to masked attention logits; `exp` of it underflows to 0.
const MASKED: f64 = f64::NEG_INFINITY;

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Non-trainable input.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Trainable leaf not tied to a parameter store.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Binds a named parameter as a trainable leaf (once per graph).
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let value = store
            .value(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {name:?}")))?
            .clone();
        let v = self.leaf(value);
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn bindings(&self) -> impl Iterator<Item = (&str, Var)> {
        self.bound.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MatMul(a, b), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), ng))
    }

    /// Broadcasts a `1 x d` row over every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::shape(
                "add_row",
                format!("{:?} + {:?}", xv.shape(), bv.shape()),
            ));
        }
        let mut value = xv.clone();
        for r in 0..value.rows() {
            for (o, b) in value.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let ng = self.needs(x) || self.needs(bias);
        Ok(self.push(value, Op::AddRow(x, bias), ng))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let value = self.value(x).map(|v| v * s);
        let ng = self.needs(x);
        self.push(value, Op::Scale(x, s), ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        let ng = self.needs(x);
        self.push(value, Op::Relu(x), ng)
    }

    /// Elementwise product with a constant tensor.
    pub fn mul_const(&mut self, x: Var, c: Tensor) -> Result<Var> {
        let value = self.value(x).zip_map(&c, |a, b| a * b)?;
        let ng = self.needs(x);
        Ok(self.push(value, Op::MulConst(x, c), ng))
    }

    /// Row-wise layer normalization with `1 x d` affine parameters.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let xv = self.value(x);
        let d = xv.cols();
        if d < 1 {
            return Err(Error::shape("layer_norm", "empty feature dimension"));
        }
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument(format!("layer_norm eps {eps}")));
        }
        for p in [gamma, beta] {
            if self.value(p).shape() != [1, d] {
                return Err(Error::shape(
                    "layer_norm",
                    format!("affine {:?} for width {d}", self.value(p).shape()),
                ));
            }
        }
        let n = xv.rows();
        let mut xhat = Tensor::zeros(n, d);
        let mut inv_std = Vec::with_capacity(n);
        for r in 0..n {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for (o, v) in xhat.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * inv;
            }
            inv_std.push(inv);
        }
        let (gv, bv) = (self.value(gamma), self.value(beta));
        let mut value = xhat.clone();
        for r in 0..n {
            for ((o, g), b) in value.row_mut(r).iter_mut().zip(gv.data()).zip(bv.data()) {
                *o = *o * g + b;
            }
        }
        let ng = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            ng,
        ))
    }

    /// Row softmax with max subtraction. With `causal`, entry `(i, j)` for
    /// `j > i` is masked to exactly zero.
    pub fn softmax_rows(&mut self, x: Var, causal: bool) -> Var {
        let mut value = self.value(x).clone();
        let cols = value.cols();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            if causal {
                for v in row.iter_mut().skip(r + 1) {
                    *v = MASKED;
                }
            }
            softmax_in_place(row);
        }
        debug_assert!(cols == 0 || value.all_finite());
        let ng = self.needs(x);
        self.push(value, Op::Softmax(x), ng)
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let value = self.value(x).transpose();
        let ng = self.needs(x);
        self.push(value, Op::Transpose(x), ng)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        if start + len > xv.cols() {
            return Err(Error::shape(
                "slice_cols",
                format!("{start}..{} of {}", start + len, xv.cols()),
            ));
        }
        let mut value = Tensor::zeros(xv.rows(), len);
        for r in 0..xv.rows() {
            value
                .row_mut(r)
                .copy_from_slice(&xv.row(r)[start..start + len]);
        }
        let ng = self.needs(x);
        Ok(self.push(value, Op::SliceCols { x, start }, ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|&p| self.value(p).rows())
            .ok_or_else(|| Error::shape("concat_cols", "no inputs"))?;
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::shape("concat_cols", "row counts differ"));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut value = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                value.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), ng))
    }

    /// Row lookup: output row `i` is `table[ids[i]]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        if let Some(&bad) = ids.iter().find(|&&i| i >= tv.rows()) {
            return Err(Error::shape(
                "gather",
                format!("id {bad} out of {} rows", tv.rows()),
            ));
        }
        let mut value = Tensor::zeros(ids.len(), tv.cols());
        for (r, &id) in ids.iter().enumerate() {
            value.row_mut(r).copy_from_slice(tv.row(id));
        }
        let ng = self.needs(table);
        Ok(self.push(
            value,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            ng,
        ))
    }

    /// `lam * a + (1 - lam) * b` for a `1 x 1` weight `lam`. When `rows` is
    /// given, rows marked `false` are copied from `a` untouched.
    pub fn mix(&mut self, a: Var, b: Var, lam: Var, rows: Option<Vec<bool>>) -> Result<Var> {
        let (av, bv, lv) = (self.value(a), self.value(b), self.value(lam));
        if av.shape() != bv.shape() || lv.shape() != [1, 1] {
            return Err(Error::shape(
                "mix",
                format!(
                    "{:?}, {:?}, weight {:?}",
                    av.shape(),
                    bv.shape(),
                    lv.shape()
                ),
            ));
        }
        if rows.as_ref().is_some_and(|m| m.len() != av.rows()) {
            return Err(Error::shape("mix", "row mask length"));
        }
        let l = lv.item();
        let mut value = av.clone();
        for r in 0..av.rows() {
            if rows.as_ref().is_none_or(|m| m[r]) {
                for (o, y) in value.row_mut(r).iter_mut().zip(bv.row(r)) {
                    *o = l * *o + (1.0 - l) * y;
                }
            }
        }
        let ng = self.needs(a) || self.needs(b) || self.needs(lam);
        Ok(self.push(value, Op::Mix { a, b, lam, rows }, ng))
    }

    /// Mean token cross-entropy of row-wise logits against target ids.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        if lv.rows() != targets.len() || targets.is_empty() {
            return Err(Error::shape(
                "cross_entropy",
                format!("{} rows for {} targets", lv.rows(), targets.len()),
            ));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= lv.cols()) {
            return Err(Error::shape("cross_entropy", format!("target {bad}")));
        }
        let mut probs = lv.clone();
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = probs.row_mut(r);
            softmax_in_place(row);
            // log p_t computed from the logits to avoid log(0)
            let raw = self.nodes[logits.0].value.row(r);
            let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + raw.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - raw[t];
        }
        let n = targets.len() as f64;
        let ng = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(loss / n),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            ng,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        let ng = self.needs(x);
        self.push(value, Op::Sum(x), ng)
    }

    /// Gradients of the scalar `output` with respect to every node.
    pub fn backward(&self, output: Var) -> Result<Grads> {
        if self.value(output).shape() != [1, 1] {
            return Err(Error::shape("backward", "output must be 1x1"));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::scalar(1.0));

        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.needs(*a) {
                        let mut ga = Tensor::zeros(av.rows(), av.cols());
                        gemm_acc(&g, false, bv, true, &mut ga);
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.needs(*b) {
                        let mut gb = Tensor::zeros(bv.rows(), bv.cols());
                        gemm_acc(av, true, &g, false, &mut gb);
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g.clone());
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::AddRow(x, bias) => {
                    if self.needs(*bias) {
                        accumulate(&mut grads, *bias, column_sums(&g));
                    }
                    if self.needs(*x) {
                        accumulate(&mut grads, *x, g);
                    }
                }
                Op::Scale(x, s) => {
                    let s = *s;
                    accumulate(&mut grads, *x, g.map(|v| v * s));
                }
                Op::Relu(x) => {
                    let gx = g.zip_map(self.value(*x), |gv, xv| if xv > 0.0 { gv } else { 0.0 })?;
                    accumulate(&mut grads, *x, gx);
                }
                Op::MulConst(x, c) => {
                    accumulate(&mut grads, *x, g.zip_map(c, |a, b| a * b)?);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let gamma_v = self.value(*gamma);
                    let d = xhat.cols();
                    if self.needs(*beta) {
                        accumulate(&mut grads, *beta, column_sums(&g));
                    }
                    if self.needs(*gamma) {
                        let gg = column_sums(&g.zip_map(xhat, |a, b| a * b)?);
                        accumulate(&mut grads, *gamma, gg);
                    }
                    if self.needs(*x) {
                        let mut gx = Tensor::zeros(xhat.rows(), d);
                        for r in 0..xhat.rows() {
                            let dxhat: Vec<f64> = g
                                .row(r)
                                .iter()
                                .zip(gamma_v.data())
                                .map(|(a, b)| a * b)
                                .collect();
                            let xh = xhat.row(r);
                            let mean_d = dxhat.iter().sum::<f64>() / d as f64;
                            let mean_dx =
                                dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                            for ((o, dv), xv) in gx.row_mut(r).iter_mut().zip(&dxhat).zip(xh) {
                                *o = inv_std[r] * (dv - mean_d - xv * mean_dx);
                            }
                        }
                        accumulate(&mut grads, *x, gx);
                    }
                }
                Op::Softmax(x) => {
                    let y = &node.value;
                    let mut gx = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((o, yv), gv) in gx.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o = yv * (gv - dot);
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::Transpose(x) => accumulate(&mut grads, *x, g.transpose()),
                Op::SliceCols { x, start } => {
                    let xv = self.value(*x);
                    let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                    for r in 0..g.rows() {
                        gx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        if self.needs(p) {
                            let mut gp = Tensor::zeros(g.rows(), w);
                            for r in 0..g.rows() {
                                gp.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                            }
                            accumulate(&mut grads, p, gp);
                        }
                        off += w;
                    }
                }
                Op::Gather { table, ids } => {
                    let tv = self.value(*table);
                    let mut gt = Tensor::zeros(tv.rows(), tv.cols());
                    for (r, &id) in ids.iter().enumerate() {
                        for (o, v) in gt.row_mut(id).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, *table, gt);
                }
                Op::Mix { a, b, lam, rows } => {
                    let l = self.value(*lam).item();
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mixed = |r: usize| rows.as_ref().is_none_or(|m| m[r]);
                    if self.needs(*lam) {
                        let mut gl = 0.0;
                        for r in (0..g.rows()).filter(|&r| mixed(r)) {
                            for ((gv, x), y) in g.row(r).iter().zip(av.row(r)).zip(bv.row(r)) {
                                gl += gv * (x - y);
                            }
                        }
                        accumulate(&mut grads, *lam, Tensor::scalar(gl));
                    }
                    if self.needs(*b) {
                        let mut gb = Tensor::zeros(g.rows(), g.cols());
                        for r in (0..g.rows()).filter(|&r| mixed(r)) {
                            for (o, gv) in gb.row_mut(r).iter_mut().zip(g.row(r)) {
                                *o = (1.0 - l) * gv;
                            }
                        }
                        accumulate(&mut grads, *b, gb);
                    }
                    if self.needs(*a) {
                        let mut ga = g;
                        for r in (0..ga.rows()).filter(|&r| mixed(r)) {
                            ga.row_mut(r).iter_mut().for_each(|v| *v *= l);
                        }
                        accumulate(&mut grads, *a, ga);
                    }
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                } => {
                    let scale = g.item() / targets.len() as f64;
                    let mut gl = probs.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        let row = gl.row_mut(r);
                        row[t] -= 1.0;
                        row.iter_mut().for_each(|v| *v *= scale);
                    }
                    accumulate(&mut grads, *logits, gl);
                }
                Op::Sum(x) => {
                    let xv = self.value(*x);
                    accumulate(
                        &mut grads,
                        *x,
                        Tensor::filled(xv.rows(), xv.cols(), g.item()),
                    );
                }
            }
        }
        Ok(Grads { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot => *slot = Some(g),
    }
}

fn column_sums(g: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(1, g.cols());
    for r in 0..g.rows() {
        for (o, v) in out.data_mut().iter_mut().zip(g.row(r)) {
            *o += v;
        }
    }
    out
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

//! Standard differentiable layers on top of [`Graph`] primitives.

use super::graph::{Graph, Var};
use super::rng::RngState;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const LN_EPS: f64 = 1e-5;
pub const DEFAULT_DROPOUT: f64 = 0.1;

/// `y = x W + b`.
pub fn linear(g: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var> {
    let xw = g.matmul(x, w)?;
    g.add_row(xw, b)
}

pub fn layer_norm(g: &mut Graph, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
    g.layer_norm(x, gamma, beta, eps)
}

pub fn softmax_rows(g: &mut Graph, x: Var) -> Var {
    g.softmax_rows(x, false)
}

/// Inverted dropout: kept entries are scaled by `1 / (1 - p)` during
/// training; inference (or `p == 0`) returns `x` itself.
pub fn dropout(g: &mut Graph, x: Var, p: f64, rng: &mut RngState, training: bool) -> Result<Var> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "dropout probability {p} outside [0, 1)"
        )));
    }
    if !training || p == 0.0 {
        return Ok(x);
    }
    let [rows, cols] = g.value(x).shape();
    let keep = 1.0 / (1.0 - p);
    let mask = (0..rows * cols)
        .map(|_| if rng.next_f64() < p { 0.0 } else { keep })
        .collect();
    g.mul_const(x, Tensor::from_vec(rows, cols, mask)?)
}

/// Dropout settings threaded through a forward pass.
pub struct DropoutCtx<'a> {
    pub p: f64,
    pub training: bool,
    pub rng: &'a mut RngState,
}

impl DropoutCtx<'_> {
    pub fn apply(&mut self, g: &mut Graph, x: Var) -> Result<Var> {
        dropout(g, x, self.p, self.rng, self.training)
    }
}

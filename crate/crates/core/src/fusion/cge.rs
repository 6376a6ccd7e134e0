//! Coreference graph encoding (CGE) layers.
//!
//! Per layer, for token states `h_i`:
//!
//! ```text
//! u_i  = W1 ReLU(W0 h_i + b0) + b1
//! v_i  = LayerNorm(h_i + Dropout(u_i))
//! w_i  = ReLU(mean_{j in N_i} W2 v_j + b2)
//! h'_i = LayerNorm(Dropout(w_i) + v_i)
//! ```
//!
//! `N_i` are the graph neighbours of `i`, or `{i}` when `i` is isolated.

use crate::error::{Error, Result};
use crate::numerics::{
    layers::LN_EPS, linear, DropoutCtx, Graph, ParamGroup, ParamStore, RngState, Var,
};
use crate::structures::CorefGraph;

use super::FusionWeight;

#[derive(Clone, Copy, Debug)]
pub struct CgeLayerParams {
    pub w0: Var,
    pub b0: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub ln1_gamma: Var,
    pub ln1_beta: Var,
    pub ln2_gamma: Var,
    pub ln2_beta: Var,
}

const WEIGHTS: [&str; 3] = ["w0", "w1", "w2"];
const BIASES: [&str; 3] = ["b0", "b1", "b2"];

impl CgeLayerParams {
    /// Registers a layer's parameters under `prefix` in the fusion group.
    pub fn init(store: &mut ParamStore, prefix: &str, d: usize, rng: &mut RngState) {
        for w in WEIGHTS {
            store.init_uniform(&format!("{prefix}.{w}"), d, d, ParamGroup::Fusion, rng);
        }
        for b in BIASES {
            store.init_const(&format!("{prefix}.{b}"), 1, d, 0.0, ParamGroup::Fusion);
        }
        for ln in ["ln1", "ln2"] {
            store.init_const(
                &format!("{prefix}.{ln}.gamma"),
                1,
                d,
                1.0,
                ParamGroup::Fusion,
            );
            store.init_const(
                &format!("{prefix}.{ln}.beta"),
                1,
                d,
                0.0,
                ParamGroup::Fusion,
            );
        }
    }

    pub fn bind(g: &mut Graph, store: &ParamStore, prefix: &str) -> Result<Self> {
        let mut p = |name: &str| g.param(store, &format!("{prefix}.{name}"));
        Ok(Self {
            w0: p("w0")?,
            b0: p("b0")?,
            w1: p("w1")?,
            b1: p("b1")?,
            w2: p("w2")?,
            b2: p("b2")?,
            ln1_gamma: p("ln1.gamma")?,
            ln1_beta: p("ln1.beta")?,
            ln2_gamma: p("ln2.gamma")?,
            ln2_beta: p("ln2.beta")?,
        })
    }
}

pub fn cge_forward(
    g: &mut Graph,
    h: Var,
    graph: &CorefGraph,
    p: &CgeLayerParams,
    drop: &mut DropoutCtx,
) -> Result<Var> {
    if g.value(h).rows() != graph.n() {
        return Err(Error::shape(
            "cge_forward",
            format!(
                "{} states for a {}-node graph",
                g.value(h).rows(),
                graph.n()
            ),
        ));
    }
    let hidden = linear(g, h, p.w0, p.b0)?;
    let hidden = g.relu(hidden);
    let u = linear(g, hidden, p.w1, p.b1)?;
    let u = drop.apply(g, u)?;
    let res = g.add(h, u)?;
    let v = g.layer_norm(res, p.ln1_gamma, p.ln1_beta, LN_EPS)?;

    // mean over neighbours of W2 v_j, then + b2; rows of M sum to one so the
    // bias can be added after aggregation
    let m = g.constant(graph.mean_aggregation());
    let proj = g.matmul(v, p.w2)?;
    let agg = g.matmul(m, proj)?;
    let agg = g.add_row(agg, p.b2)?;
    let w = g.relu(agg);
    let w = drop.apply(g, w)?;
    let res = g.add(w, v)?;
    g.layer_norm(res, p.ln2_gamma, p.ln2_beta, LN_EPS)
}

/// Stacked CGE layers followed by `lambda * H + (1 - lambda) * H^G`.
pub fn cge_stack(
    g: &mut Graph,
    h: Var,
    graph: &CorefGraph,
    layers: &[CgeLayerParams],
    lambda: Var,
    drop: &mut DropoutCtx,
) -> Result<Var> {
    if layers.is_empty() {
        return Err(Error::InvalidArgument(
            "cge_stack needs at least one layer".into(),
        ));
    }
    let mut hg = h;
    for layer in layers {
        hg = cge_forward(g, hg, graph, layer, drop)?;
    }
    g.mix(h, hg, lambda, None)
}

/// Registers `depth` CGE layers plus the mixing weight under `prefix`.
pub fn init_stack(
    store: &mut ParamStore,
    prefix: &str,
    depth: usize,
    d: usize,
    lambda: &FusionWeight,
    lambda_init: f64,
    rng: &mut RngState,
) {
    for k in 0..depth {
        CgeLayerParams::init(store, &format!("{prefix}.layer{k}"), d, rng);
    }
    lambda.init(store, lambda_init);
}

pub fn bind_stack(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    depth: usize,
) -> Result<Vec<CgeLayerParams>> {
    (0..depth)
        .map(|k| CgeLayerParams::bind(g, store, &format!("{prefix}.layer{k}")))
        .collect()
}

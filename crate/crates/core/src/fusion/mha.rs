//! Multi-head attention with optional per-head weight replacement.
//!
//! A replaced head skips its softmax and uses the supplied matrix (normally
//! the coreference attention matrix) as attention weights; its value
//! projection and the output projection stay trainable.

use crate::error::{Error, Result};
use crate::numerics::{linear, Graph, ParamGroup, ParamStore, RngState, Tensor, Var};

#[derive(Clone, Copy, Debug)]
pub struct MhaParams {
    pub heads: usize,
    pub d_k: usize,
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
}

impl MhaParams {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        d: usize,
        group: ParamGroup,
        rng: &mut RngState,
    ) {
        for m in ["q", "k", "v", "o"] {
            store.init_uniform(&format!("{prefix}.w{m}"), d, d, group, rng);
            store.init_const(&format!("{prefix}.b{m}"), 1, d, 0.0, group);
        }
    }

    pub fn bind(g: &mut Graph, store: &ParamStore, prefix: &str, heads: usize) -> Result<Self> {
        let mut p = |name: &str| g.param(store, &format!("{prefix}.{name}"));
        let (wq, bq, wk, bk) = (p("wq")?, p("bq")?, p("wk")?, p("bk")?);
        let (wv, bv, wo, bo) = (p("wv")?, p("bv")?, p("wo")?, p("bo")?);
        Self::from_vars(g, heads, [wq, bq, wk, bk, wv, bv, wo, bo])
    }

    /// Builds from `[wq, bq, wk, bk, wv, bv, wo, bo]`.
    pub fn from_vars(g: &Graph, heads: usize, v: [Var; 8]) -> Result<Self> {
        let d = g.value(v[0]).rows();
        if heads == 0 || !d.is_multiple_of(heads) {
            return Err(Error::InvalidArgument(format!(
                "hidden size {d} not divisible into {heads} heads"
            )));
        }
        Ok(Self {
            heads,
            d_k: d / heads,
            wq: v[0],
            bq: v[1],
            wk: v[2],
            bk: v[3],
            wv: v[4],
            bv: v[5],
            wo: v[6],
            bo: v[7],
        })
    }
}

pub struct AttentionOutput {
    pub out: Var,
    /// One `n_q x n_kv` weight matrix per head.
    pub maps: Vec<Tensor>,
    /// Per-head context `weights * V_h`, before concatenation.
    pub contexts: Vec<Var>,
}

/// General attention from `queries` over `memory`.
pub fn attention(
    g: &mut Graph,
    queries: Var,
    memory: Var,
    p: &MhaParams,
    causal: bool,
    replace: &[(usize, &Tensor)],
) -> Result<AttentionOutput> {
    let (nq, nk) = (g.value(queries).rows(), g.value(memory).rows());
    for &(head, m) in replace {
        if head >= p.heads {
            return Err(Error::InvalidArgument(format!(
                "replaced head {head} out of {} heads",
                p.heads
            )));
        }
        if m.shape() != [nq, nk] {
            return Err(Error::shape(
                "mha_forward",
                format!("replacement {:?} for {nq}x{nk} attention", m.shape()),
            ));
        }
    }
    let q = linear(g, queries, p.wq, p.bq)?;
    let k = linear(g, memory, p.wk, p.bk)?;
    let v = linear(g, memory, p.wv, p.bv)?;
    let scale = 1.0 / (p.d_k as f64).sqrt();

    let mut contexts = Vec::with_capacity(p.heads);
    let mut maps = Vec::with_capacity(p.heads);
    for h in 0..p.heads {
        let off = h * p.d_k;
        let vh = g.slice_cols(v, off, p.d_k)?;
        let weights = match replace.iter().find(|(r, _)| *r == h) {
            Some(&(_, m)) => g.constant(m.clone()),
            None => {
                let qh = g.slice_cols(q, off, p.d_k)?;
                let kh = g.slice_cols(k, off, p.d_k)?;
                let kt = g.transpose(kh);
                let scores = g.matmul(qh, kt)?;
                let scores = g.scale(scores, scale);
                g.softmax_rows(scores, causal)
            }
        };
        maps.push(g.value(weights).clone());
        contexts.push(g.matmul(weights, vh)?);
    }
    let cat = g.concat_cols(&contexts)?;
    let out = linear(g, cat, p.wo, p.bo)?;
    Ok(AttentionOutput {
        out,
        maps,
        contexts,
    })
}

/// Self-attention over `x`; heads listed in `replace` use the given weights.
pub fn mha_forward(
    g: &mut Graph,
    x: Var,
    p: &MhaParams,
    replace: &[(usize, &Tensor)],
) -> Result<AttentionOutput> {
    attention(g, x, x, p, false, replace)
}

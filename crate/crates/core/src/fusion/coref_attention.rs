//! Parameter-free coreference-guided attention.
//!
//! A covered token `i` in cluster `C` becomes
//! `lambda * h_i + (1 - lambda) * mean_{j in C} h_j`; uncovered tokens pass
//! through bit-for-bit. In matrix form this is
//! `lambda * H + (1 - lambda) * A^c H` with identity rows for uncovered tokens.

use crate::error::{Error, Result};
use crate::numerics::{Graph, Var};
use crate::structures::CorefAttentionMatrix;

pub fn coref_attention_update(
    g: &mut Graph,
    h: Var,
    ac: &CorefAttentionMatrix,
    lambda: Var,
) -> Result<Var> {
    if g.value(h).rows() != ac.n() {
        return Err(Error::shape(
            "coref_attention_update",
            format!("{} states for a {}-token matrix", g.value(h).rows(), ac.n()),
        ));
    }
    if !ac.covered().iter().any(|&c| c) {
        return Ok(h);
    }
    let weights = g.constant(ac.weights().clone());
    let attended = g.matmul(weights, h)?;
    g.mix(h, attended, lambda, Some(ac.covered().to_vec()))
}

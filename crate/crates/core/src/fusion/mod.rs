//! Coreference fusion mechanisms for the encoder.
//!
//! * [`cge`]: graph encoding layers over the coreference graph, mixed back
//!   into the encoder states with a fusion weight.
//! * [`coref_attention`]: a parameter-free layer averaging each covered token
//!   with its cluster.
//! * [`mha`] and [`probe`]: multi-head self-attention whose selected heads can
//!   take the coreference attention matrix as their weights, and the probing
//!   that picks those heads.

pub mod cge;
pub mod coref_attention;
pub mod mha;
pub mod probe;

pub use cge::{cge_forward, cge_stack, CgeLayerParams};
pub use coref_attention::coref_attention_update;
pub use mha::{attention, mha_forward, AttentionOutput, MhaParams};
pub use probe::{cosine_similarity, probe_heads, HeadSelection, LayerProbe, ProbeReport};

use crate::error::Result;
use crate::numerics::{Graph, ParamGroup, ParamStore, Var};

/// Initial value of every fusion weight.
pub const LAMBDA_INIT: f64 = 0.7;

/// Scalar mixing weight `lambda` between contextual and coreference-aware
/// states. Stored as a `1 x 1` parameter in the fusion group.
#[derive(Clone, Debug)]
pub struct FusionWeight {
    pub name: String,
    pub trainable: bool,
}

impl FusionWeight {
    pub fn new(name: impl Into<String>, trainable: bool) -> Self {
        Self {
            name: name.into(),
            trainable,
        }
    }

    pub fn init(&self, store: &mut ParamStore, value: f64) {
        store.init_const(&self.name, 1, 1, value.clamp(0.0, 1.0), ParamGroup::Fusion);
    }

    /// Trainable weights bind as leaves; frozen ones as constants.
    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> Result<Var> {
        if self.trainable {
            g.param(store, &self.name)
        } else {
            let value = store
                .value(&self.name)
                .ok_or_else(|| crate::Error::InvalidArgument(format!("unknown {}", self.name)))?
                .clone();
            Ok(g.constant(value))
        }
    }

    pub fn value(&self, store: &ParamStore) -> Option<f64> {
        store.value(&self.name).map(|t| t.item())
    }

    pub fn clamp(&self, store: &mut ParamStore) {
        if let Some(p) = store.get_mut(&self.name) {
            p.value.data_mut()[0] = p.value.data()[0].clamp(0.0, 1.0);
        }
    }
}

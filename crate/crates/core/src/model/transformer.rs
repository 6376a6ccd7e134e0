//! Post-LN encoder-decoder transformer with optional coreference fusion in
//! the encoder.

use crate::coref::CorefAnnotation;
use crate::dialogue::{Vocabulary, BOS};
use crate::error::{Error, Result};
use crate::fusion::{
    attention, cge::bind_stack, cge::init_stack, cge_stack, coref_attention_update, FusionWeight,
    MhaParams,
};
use crate::numerics::{
    layers::LN_EPS, linear, DropoutCtx, Graph, ParamGroup, ParamStore, RngState, Tensor, Var,
};
use crate::structures::{
    build_coref_attention, build_coref_graph, CorefAttentionMatrix, CorefGraph,
};

use super::config::{ModelConfig, Variant};

pub const LAMBDA_NAME: &str = "fusion.lambda";
const CGE_PREFIX: &str = "fusion.cge";

/// Coreference structures for one input, built once and reused across
/// epochs.
#[derive(Clone, Debug)]
pub struct CorefInputs {
    pub graph: CorefGraph,
    pub attention: CorefAttentionMatrix,
}

impl CorefInputs {
    pub fn build(a: &CorefAnnotation, n: usize) -> Result<Self> {
        Ok(Self {
            graph: build_coref_graph(a, n)?,
            attention: build_coref_attention(a, n)?,
        })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            graph: CorefGraph::empty(n),
            attention: CorefAttentionMatrix::identity(n),
        }
    }
}

pub struct Encoded {
    pub h: Var,
    /// `maps[layer][head]`, each `n x n`.
    pub maps: Vec<Vec<Tensor>>,
}

/// Model parameters plus the vocabulary they were trained with.
#[derive(Clone, Debug)]
pub struct Summarizer {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ParamStore,
}

/// Group implied by a parameter name.
pub fn group_of(name: &str) -> ParamGroup {
    if name.starts_with("fusion.") {
        ParamGroup::Fusion
    } else {
        ParamGroup::Backbone
    }
}

pub fn sinusoidal_positions(n: usize, d: usize) -> Tensor {
    let mut t = Tensor::zeros(n, d);
    for pos in 0..n {
        for i in 0..d {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = pos as f64 / rate;
            t.set(pos, i, if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    t
}

fn init_ln(store: &mut ParamStore, prefix: &str, d: usize) {
    store.init_const(&format!("{prefix}.gamma"), 1, d, 1.0, ParamGroup::Backbone);
    store.init_const(&format!("{prefix}.beta"), 1, d, 0.0, ParamGroup::Backbone);
}

fn init_ffn(store: &mut ParamStore, prefix: &str, d: usize, f: usize, rng: &mut RngState) {
    store.init_uniform(&format!("{prefix}.w1"), d, f, ParamGroup::Backbone, rng);
    store.init_const(&format!("{prefix}.b1"), 1, f, 0.0, ParamGroup::Backbone);
    store.init_uniform(&format!("{prefix}.w2"), f, d, ParamGroup::Backbone, rng);
    store.init_const(&format!("{prefix}.b2"), 1, d, 0.0, ParamGroup::Backbone);
}

impl Summarizer {
    /// Fresh model. Backbone and fusion parameters draw from separate
    /// streams, so every variant shares the base backbone for a given seed.
    pub fn new(config: ModelConfig, vocab: Vocabulary) -> Result<Self> {
        config.validate()?;
        let (d, f, v) = (config.d_model, config.ffn, vocab.len());
        let mut store = ParamStore::new();
        let mut rng = RngState::new(config.seed);
        store.init_uniform("embed", v, d, ParamGroup::Backbone, &mut rng);
        init_ln(&mut store, "enc.ln_emb", d);
        init_ln(&mut store, "dec.ln_emb", d);
        for l in 0..config.encoder_layers {
            let p = format!("enc.{l}");
            MhaParams::init(
                &mut store,
                &format!("{p}.attn"),
                d,
                ParamGroup::Backbone,
                &mut rng,
            );
            init_ln(&mut store, &format!("{p}.ln1"), d);
            init_ffn(&mut store, &format!("{p}.ffn"), d, f, &mut rng);
            init_ln(&mut store, &format!("{p}.ln2"), d);
        }
        for l in 0..config.decoder_layers {
            let p = format!("dec.{l}");
            MhaParams::init(
                &mut store,
                &format!("{p}.self"),
                d,
                ParamGroup::Backbone,
                &mut rng,
            );
            init_ln(&mut store, &format!("{p}.ln1"), d);
            MhaParams::init(
                &mut store,
                &format!("{p}.cross"),
                d,
                ParamGroup::Backbone,
                &mut rng,
            );
            init_ln(&mut store, &format!("{p}.ln2"), d);
            init_ffn(&mut store, &format!("{p}.ffn"), d, f, &mut rng);
            init_ln(&mut store, &format!("{p}.ln3"), d);
        }
        store.init_const("out.b", 1, v, 0.0, ParamGroup::Backbone);

        let mut fusion_rng = RngState::new(config.seed ^ 0x5e_edf0_5105);
        let lambda = FusionWeight::new(LAMBDA_NAME, config.lambda_trainable);
        match config.variant {
            Variant::Gnn => init_stack(
                &mut store,
                CGE_PREFIX,
                config.cge_depth,
                d,
                &lambda,
                config.lambda_init,
                &mut fusion_rng,
            ),
            Variant::Attn => lambda.init(&mut store, config.lambda_init),
            Variant::Base | Variant::Headrep => {}
        }
        Ok(Self {
            config,
            vocab,
            params: store,
        })
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn lambda(&self) -> Option<FusionWeight> {
        self.config
            .variant
            .has_lambda()
            .then(|| FusionWeight::new(LAMBDA_NAME, self.config.lambda_trainable))
    }

    pub fn lambda_value(&self) -> Option<f64> {
        self.lambda().and_then(|w| w.value(&self.params))
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidArgument("empty input sequence".into()));
        }
        if n > self.config.max_len {
            return Err(Error::TooLong {
                len: n,
                max: self.config.max_len,
            });
        }
        Ok(())
    }

    fn embed(&self, g: &mut Graph, ids: &[usize], ln: &str, drop: &mut DropoutCtx) -> Result<Var> {
        let d = self.config.d_model;
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.vocab.len()) {
            return Err(Error::InvalidArgument(format!(
                "token id {bad} outside vocabulary of {}",
                self.vocab.len()
            )));
        }
        let table = g.param(&self.params, "embed")?;
        let x = g.gather(table, ids)?;
        let x = g.scale(x, (d as f64).sqrt());
        let pe = g.constant(sinusoidal_positions(ids.len(), d));
        let x = g.add(x, pe)?;
        let (gamma, beta) = (
            g.param(&self.params, &format!("{ln}.gamma"))?,
            g.param(&self.params, &format!("{ln}.beta"))?,
        );
        let x = g.layer_norm(x, gamma, beta, LN_EPS)?;
        drop.apply(g, x)
    }

    fn add_norm(
        &self,
        g: &mut Graph,
        x: Var,
        sub: Var,
        ln: &str,
        drop: &mut DropoutCtx,
    ) -> Result<Var> {
        let sub = drop.apply(g, sub)?;
        let res = g.add(x, sub)?;
        let gamma = g.param(&self.params, &format!("{ln}.gamma"))?;
        let beta = g.param(&self.params, &format!("{ln}.beta"))?;
        g.layer_norm(res, gamma, beta, LN_EPS)
    }

    fn ffn(&self, g: &mut Graph, x: Var, prefix: &str, drop: &mut DropoutCtx) -> Result<Var> {
        let mut p = |n: &str| g.param(&self.params, &format!("{prefix}.{n}"));
        let (w1, b1, w2, b2) = (p("w1")?, p("b1")?, p("w2")?, p("b2")?);
        let hidden = linear(g, x, w1, b1)?;
        let hidden = g.relu(hidden);
        let hidden = drop.apply(g, hidden)?;
        linear(g, hidden, w2, b2)
    }

    /// Encoder states for `ids`, with coreference fusion per the variant.
    /// `coref` may be `None` for the base variant; other variants treat
    /// `None` as an empty annotation.
    pub fn encode(
        &self,
        g: &mut Graph,
        ids: &[usize],
        coref: Option<&CorefInputs>,
        drop: &mut DropoutCtx,
    ) -> Result<Encoded> {
        let n = ids.len();
        self.check_len(n)?;
        let empty;
        let coref = match coref {
            Some(c) => {
                if c.graph.n() != n || c.attention.n() != n {
                    return Err(Error::shape(
                        "encode",
                        format!(
                            "coreference structures over {} tokens for {n} inputs",
                            c.graph.n()
                        ),
                    ));
                }
                c
            }
            None => {
                empty = CorefInputs::empty(n);
                &empty
            }
        };
        let cfg = &self.config;
        let mut x = self.embed(g, ids, "enc.ln_emb", drop)?;
        let mut maps = Vec::with_capacity(cfg.encoder_layers);
        for l in 0..cfg.encoder_layers {
            let p = format!("enc.{l}");
            let attn_p = MhaParams::bind(g, &self.params, &format!("{p}.attn"), cfg.heads)?;
            let replace: Vec<(usize, &Tensor)> = if cfg.variant == Variant::Headrep {
                cfg.head_selection
                    .heads_in_layer(l)
                    .map(|h| (h, coref.attention.weights()))
                    .collect()
            } else {
                Vec::new()
            };
            let a = attention(g, x, x, &attn_p, false, &replace)?;
            maps.push(a.maps);
            x = self.add_norm(g, x, a.out, &format!("{p}.ln1"), drop)?;
            let f = self.ffn(g, x, &format!("{p}.ffn"), drop)?;
            x = self.add_norm(g, x, f, &format!("{p}.ln2"), drop)?;
        }
        let h = match cfg.variant {
            Variant::Base | Variant::Headrep => x,
            Variant::Gnn => {
                let layers = bind_stack(g, &self.params, CGE_PREFIX, cfg.cge_depth)?;
                let lambda = self.bind_lambda(g)?;
                cge_stack(g, x, &coref.graph, &layers, lambda, drop)?
            }
            Variant::Attn => {
                let lambda = self.bind_lambda(g)?;
                coref_attention_update(g, x, &coref.attention, lambda)?
            }
        };
        Ok(Encoded { h, maps })
    }

    fn bind_lambda(&self, g: &mut Graph) -> Result<Var> {
        self.lambda()
            .ok_or_else(|| Error::Config(format!("{} has no fusion weight", self.variant())))?
            .bind(g, &self.params)
    }

    /// Decoder logits (`prefix.len() x vocab`) for every prefix position.
    pub fn decode_logits(
        &self,
        g: &mut Graph,
        memory: Var,
        prefix: &[usize],
        drop: &mut DropoutCtx,
    ) -> Result<Var> {
        self.check_len(prefix.len())?;
        let cfg = &self.config;
        let mut x = self.embed(g, prefix, "dec.ln_emb", drop)?;
        for l in 0..cfg.decoder_layers {
            let p = format!("dec.{l}");
            let self_p = MhaParams::bind(g, &self.params, &format!("{p}.self"), cfg.heads)?;
            let s = attention(g, x, x, &self_p, true, &[])?;
            x = self.add_norm(g, x, s.out, &format!("{p}.ln1"), drop)?;
            let cross_p = MhaParams::bind(g, &self.params, &format!("{p}.cross"), cfg.heads)?;
            let c = attention(g, x, memory, &cross_p, false, &[])?;
            x = self.add_norm(g, x, c.out, &format!("{p}.ln2"), drop)?;
            let f = self.ffn(g, x, &format!("{p}.ffn"), drop)?;
            x = self.add_norm(g, x, f, &format!("{p}.ln3"), drop)?;
        }
        // output projection tied to the embedding table
        let table = g.param(&self.params, "embed")?;
        let tt = g.transpose(table);
        let logits = g.matmul(x, tt)?;
        let bias = g.param(&self.params, "out.b")?;
        g.add_row(logits, bias)
    }

    /// Mean teacher-forced cross-entropy of `target` (without BOS/EOS).
    pub fn loss(
        &self,
        g: &mut Graph,
        src: &[usize],
        coref: Option<&CorefInputs>,
        target: &[usize],
        drop: &mut DropoutCtx,
    ) -> Result<Var> {
        let enc = self.encode(g, src, coref, drop)?;
        let mut input = Vec::with_capacity(target.len() + 1);
        input.push(BOS);
        input.extend_from_slice(target);
        let mut gold = target.to_vec();
        gold.push(crate::dialogue::EOS);
        let logits = self.decode_logits(g, enc.h, &input, drop)?;
        g.cross_entropy(logits, &gold)
    }

    /// Inference-mode encoder output as a plain tensor.
    pub fn encode_tensor(
        &self,
        ids: &[usize],
        coref: Option<&CorefInputs>,
    ) -> Result<(Tensor, Vec<Vec<Tensor>>)> {
        let mut g = Graph::new();
        let mut rng = RngState::new(0);
        let mut drop = DropoutCtx {
            p: 0.0,
            training: false,
            rng: &mut rng,
        };
        let enc = self.encode(&mut g, ids, coref, &mut drop)?;
        Ok((g.value(enc.h).clone(), enc.maps))
    }
}

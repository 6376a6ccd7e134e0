//! Greedy decoding and the end-to-end summarize path.

use crate::coref::CorefAnnotation;
use crate::dialogue::{flatten_dialogue, Dialogue, Vocabulary, BOS, EOS};
use crate::error::{Error, Result};
use crate::numerics::{DropoutCtx, Graph, RngState, Tensor};

use super::transformer::{CorefInputs, Summarizer};

/// Source of next-token logits given the tokens emitted so far (starting
/// with BOS).
pub trait StepLogits {
    fn step_logits(&mut self, prefix: &[usize]) -> Result<Vec<f64>>;
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Emits `[BOS, t1, t2, ...]`, stopping after EOS or `max_len` generated
/// tokens.
pub fn decode_greedy<S: StepLogits>(stepper: &mut S, max_len: usize) -> Result<Vec<usize>> {
    let mut seq = vec![BOS];
    while seq.len() <= max_len {
        let logits = stepper.step_logits(&seq)?;
        let next = argmax(&logits).ok_or_else(|| Error::InvalidArgument("empty logits".into()))?;
        if !logits[next].is_finite() {
            return Err(Error::NonFinite(format!(
                "decoder logit at step {}",
                seq.len()
            )));
        }
        seq.push(next);
        if next == EOS {
            break;
        }
    }
    Ok(seq)
}

/// Steps a trained model over a fixed encoder output.
pub struct ModelStepper<'a> {
    model: &'a Summarizer,
    memory: Tensor,
}

impl<'a> ModelStepper<'a> {
    pub fn new(model: &'a Summarizer, memory: Tensor) -> Self {
        Self { model, memory }
    }
}

impl StepLogits for ModelStepper<'_> {
    fn step_logits(&mut self, prefix: &[usize]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let mut rng = RngState::new(0);
        let mut drop = DropoutCtx {
            p: 0.0,
            training: false,
            rng: &mut rng,
        };
        let mem = g.constant(self.memory.clone());
        let logits = self.model.decode_logits(&mut g, mem, prefix, &mut drop)?;
        let t = g.value(logits);
        Ok(t.row(t.rows() - 1).to_vec())
    }
}

/// Generated ids with BOS and EOS stripped.
fn strip(seq: &[usize]) -> Vec<usize> {
    seq.iter()
        .copied()
        .filter(|&t| t != BOS && t != EOS)
        .collect()
}

impl Summarizer {
    /// Greedy summary ids (without BOS/EOS) for already-encoded inputs.
    pub fn generate_ids(
        &self,
        src: &[usize],
        coref: Option<&CorefInputs>,
        max_len: usize,
    ) -> Result<Vec<usize>> {
        let (memory, _) = self.encode_tensor(src, coref)?;
        // the decoder input holds BOS plus generated tokens
        let cap = max_len.min(self.config.max_len - 1);
        let seq = decode_greedy(&mut ModelStepper::new(self, memory), cap)?;
        Ok(strip(&seq))
    }

    /// Source ids and coreference structures for a dialogue.
    pub fn prepare_source(
        &self,
        dialogue: &Dialogue,
        annotation: Option<&CorefAnnotation>,
    ) -> Result<(Vec<usize>, Option<CorefInputs>)> {
        let tokens = flatten_dialogue(dialogue)?;
        let ids = self.vocab.encode(&tokens.tokens);
        let coref = if self.variant().uses_coref() {
            let a = match annotation {
                Some(a) => a.clone(),
                None => CorefAnnotation::empty(dialogue.id.clone()),
            };
            Some(CorefInputs::build(&a, ids.len())?)
        } else {
            None
        };
        Ok((ids, coref))
    }

    /// Encode, decode greedily, detokenize.
    pub fn summarize(
        &self,
        dialogue: &Dialogue,
        annotation: Option<&CorefAnnotation>,
        max_len: usize,
    ) -> Result<String> {
        let (ids, coref) = self.prepare_source(dialogue, annotation)?;
        let out = self.generate_ids(&ids, coref.as_ref(), max_len)?;
        Ok(self.vocab.decode(&out).join(" "))
    }
}

/// [`Summarizer::summarize`] after checking that `tokenizer` is the
/// vocabulary the model was trained with.
pub fn summarize(
    model: &Summarizer,
    tokenizer: &Vocabulary,
    dialogue: &Dialogue,
    annotation: Option<&CorefAnnotation>,
    max_len: usize,
) -> Result<String> {
    let (expected, found) = (model.vocab.hash(), tokenizer.hash());
    if expected != found {
        return Err(Error::VocabMismatch { expected, found });
    }
    model.summarize(dialogue, annotation, max_len)
}

//! Teacher-forced training with per-group Adam and validation ROUGE-2
//! checkpoint selection.

use crate::corpus::{Sample, SyntheticCorpus};
use crate::dialogue::{build_vocabulary, flatten_dialogue};
use crate::error::{Error, Result};
use crate::eval::{rouge_n, words};
use crate::numerics::{Adam, AdamConfig, DropoutCtx, Graph, ParamGroup, RngState};

use super::config::{ModelConfig, TrainingConfig};
use super::transformer::{CorefInputs, Summarizer};

/// A sample mapped to ids under a model's vocabulary.
#[derive(Clone, Debug)]
pub struct PreparedExample {
    pub src: Vec<usize>,
    pub coref: Option<CorefInputs>,
    pub target: Vec<usize>,
    pub reference: Vec<String>,
}

impl PreparedExample {
    pub fn new(model: &Summarizer, sample: &Sample) -> Result<Self> {
        let (src, coref) = model.prepare_source(&sample.dialogue, Some(&sample.coref))?;
        let reference = words(&sample.summary);
        let target = model.vocab.encode(&reference);
        Ok(Self {
            src,
            coref,
            target,
            reference,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Mean ROUGE-2 F on the validation split, if there is one.
    pub val_rouge2: Option<f64>,
}

pub struct TrainOutcome {
    pub model: Summarizer,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

pub struct Trainer {
    model: Summarizer,
    cfg: TrainingConfig,
    adam: Adam,
    rng: RngState,
}

impl Trainer {
    pub fn new(model: Summarizer, cfg: TrainingConfig) -> Result<Self> {
        cfg.validate()?;
        let rng = RngState::new(model.config.seed ^ 0x0d70_f0a7);
        Ok(Self {
            model,
            cfg,
            adam: Adam::new(AdamConfig::default()),
            rng,
        })
    }

    pub fn model(&self) -> &Summarizer {
        &self.model
    }

    pub fn into_model(self) -> Summarizer {
        self.model
    }

    pub fn steps(&self) -> u64 {
        self.adam.steps()
    }

    /// One optimizer step on the mean loss of `batch`; returns that loss.
    pub fn step(&mut self, batch: &[&PreparedExample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let weight = 1.0 / batch.len() as f64;
        self.model.params.zero_grads();
        let mut total = 0.0;
        for (i, ex) in batch.iter().enumerate() {
            let mut g = Graph::new();
            let mut drop = DropoutCtx {
                p: self.model.config.dropout,
                training: true,
                rng: &mut self.rng,
            };
            let loss =
                self.model
                    .loss(&mut g, &ex.src, ex.coref.as_ref(), &ex.target, &mut drop)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss {value} at step {}, batch item {i}",
                    self.adam.steps() + 1
                )));
            }
            let grads = g.backward(loss)?;
            self.model.params.accumulate(&g, &grads, weight);
            total += value;
        }
        if let Some(p) = self.model.params.iter().find(|p| !p.grad.all_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of {} at step {}",
                p.name,
                self.adam.steps() + 1
            )));
        }
        let (lr_b, lr_f) = (self.cfg.lr_backbone, self.cfg.lr_fusion);
        self.adam
            .step(&mut self.model.params, |group| match group {
                ParamGroup::Backbone => lr_b,
                ParamGroup::Fusion => lr_f,
            })?;
        if let Some(lambda) = self.model.lambda() {
            lambda.clamp(&mut self.model.params);
        }
        Ok(total * weight)
    }

    /// One pass over `data` in a seeded shuffled order; returns the mean
    /// batch loss.
    pub fn epoch(&mut self, data: &[PreparedExample]) -> Result<f64> {
        let mut order: Vec<usize> = (0..data.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, self.rng.below(i + 1));
        }
        let mut losses = Vec::new();
        for chunk in order.chunks(self.cfg.batch_size) {
            let batch: Vec<&PreparedExample> = chunk.iter().map(|&i| &data[i]).collect();
            losses.push(self.step(&batch)?);
        }
        Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
    }
}

/// Mean ROUGE-2 F of greedy outputs against the references.
pub fn validation_rouge2(
    model: &Summarizer,
    data: &[PreparedExample],
    max_len: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for ex in data {
        let ids = model.generate_ids(&ex.src, ex.coref.as_ref(), max_len)?;
        total += rouge_n(&model.vocab.decode(&ids), &ex.reference, 2).f;
    }
    Ok(total / data.len().max(1) as f64)
}

pub fn train(
    corpus: &SyntheticCorpus,
    mc: &ModelConfig,
    tc: &TrainingConfig,
) -> Result<TrainOutcome> {
    train_with_progress(corpus, mc, tc, |_| {})
}

/// Builds the vocabulary from the training split, trains for `tc.epochs`
/// and returns the epoch with the best validation ROUGE-2 (earliest on
/// ties; the last epoch when there is no validation split).
pub fn train_with_progress(
    corpus: &SyntheticCorpus,
    mc: &ModelConfig,
    tc: &TrainingConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    mc.validate()?;
    tc.validate()?;
    if corpus.train.is_empty() {
        return Err(Error::InvalidArgument("training split is empty".into()));
    }
    let mut streams = Vec::with_capacity(corpus.train.len() * 2);
    for s in &corpus.train {
        streams.push(flatten_dialogue(&s.dialogue)?.tokens);
        streams.push(words(&s.summary));
    }
    let vocab = build_vocabulary(streams.iter().map(Vec::as_slice), tc.min_count)?;
    let model = Summarizer::new(mc.clone(), vocab)?;
    let prepare = |samples: &[Sample]| -> Result<Vec<PreparedExample>> {
        samples
            .iter()
            .map(|s| PreparedExample::new(&model, s))
            .collect()
    };
    let train_set = prepare(&corpus.train)?;
    let val_set = prepare(&corpus.validation)?;

    let mut trainer = Trainer::new(model, tc.clone())?;
    let mut history = Vec::with_capacity(tc.epochs);
    let mut best: Option<(f64, usize, crate::numerics::ParamStore)> = None;
    for epoch in 1..=tc.epochs {
        let train_loss = trainer.epoch(&train_set)?;
        let val_rouge2 = if val_set.is_empty() {
            None
        } else {
            Some(validation_rouge2(
                trainer.model(),
                &val_set,
                tc.max_decode_len,
            )?)
        };
        let record = EpochRecord {
            epoch,
            train_loss,
            val_rouge2,
        };
        on_epoch(&record);
        let score = val_rouge2.unwrap_or(f64::NEG_INFINITY);
        let improves = match &best {
            None => true,
            Some((s, _, _)) => score > *s || val_rouge2.is_none(),
        };
        if improves {
            best = Some((score, epoch, trainer.model().params.clone()));
        }
        history.push(record);
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    let mut model = trainer.into_model();
    model.params = params;
    model.params.zero_grads();
    Ok(TrainOutcome {
        model,
        best_epoch,
        history,
    })
}
